mod common;

use std::collections::BTreeMap;

use common::{inputs, step};
use lob_core::engine::{replay, run, Engine, EngineConfig, EventKind, ReplayVerdict};
use lob_core::matching::{split_partial, ResidualMode};
use lob_core::settlement::{settle, TariffSchedule};
use lob_core::types::*;
use proptest::prelude::*;

fn config() -> impl Strategy<Value = EngineConfig> {
    (any::<bool>(), any::<bool>(), 0i64..20, 0i64..50).prop_map(|(imm, seller, per_kwh, flat)| {
        EngineConfig {
            residual_mode: if imm {
                ResidualMode::Immediate
            } else {
                ResidualMode::Deferred
            },
            rounding: if seller {
                MidpointRounding::TowardSeller
            } else {
                MidpointRounding::TowardBuyer
            },
            tariff: TariffSchedule {
                per_kwh: Price(per_kwh),
                per_transaction: Price(flat),
            },
            ..Default::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn stream_invariants(steps in prop::collection::vec(step(), 0..24), cfg in config()) {
        let mut engine = Engine::new(cfg);
        engine.push_inputs(inputs(&steps)).unwrap();
        while engine.step() {
            prop_assert!(engine.book().is_equilibrium(), "book left matchable at {:?}", engine.now());
            prop_assert!(engine.book().check_invariants());
        }
        let out = engine.finish();

        let mut orders: BTreeMap<OrderId, Order> = BTreeMap::new();
        let mut last_index = None;
        let mut last_time = Time(0);
        for e in &out.events {
            prop_assert!(last_index.is_none_or(|i| e.index == i + 1));
            prop_assert!(e.time >= last_time);
            last_index = Some(e.index);
            last_time = e.time;
            match &e.kind {
                EventKind::Submitted { order, .. } | EventKind::ResidualScheduled(order) => {
                    orders.insert(order.order_id, order.clone());
                }
                EventKind::Matched { dispatch, .. } => {
                    let mut bought = 0u64;
                    let mut sold = 0u64;
                    let mut fills: BTreeMap<OrderId, u64> = BTreeMap::new();
                    for t in &dispatch.transactions {
                        prop_assert_eq!(t.clearing_price, dispatch.clearing_price, "single price");
                        prop_assert!(t.quantity.0 >= 1);
                        bought += t.quantity.0;
                        sold += t.quantity.0;
                        *fills.entry(t.buyer_order).or_default() += t.quantity.0;
                        *fills.entry(t.seller_order).or_default() += t.quantity.0;
                        let buyer = &orders[&t.buyer_order];
                        let seller = &orders[&t.seller_order];
                        prop_assert_eq!(buyer.side, Side::Buy);
                        prop_assert_eq!(seller.side, Side::Sell);
                        prop_assert!(t.duration <= buyer.duration.min(seller.duration));
                        if let Some(b) = buyer.limit_price() {
                            prop_assert!(t.clearing_price <= b, "price above bid limit");
                        }
                        if let Some(a) = seller.limit_price() {
                            prop_assert!(t.clearing_price >= a, "price below ask limit");
                        }
                    }
                    prop_assert_eq!(bought, sold);
                    for (id, q) in fills {
                        let o = &orders[&id];
                        prop_assert!(q <= o.quantity.0);
                        if !o.flexible {
                            prop_assert_eq!(q, o.quantity.0, "inflexible order {} partially filled", id);
                        }
                    }
                }
                _ => {}
            }
        }

        prop_assert_eq!(out.settlements.len(), out.dispatches.len());
        for (d, report) in out.dispatches.iter().zip(&out.settlements) {
            prop_assert!(report.is_budget_balanced());
            let untaxed = settle(d, &orders.values().cloned().collect::<Vec<_>>(), &TariffSchedule::default()).unwrap();
            prop_assert!(untaxed.is_budget_balanced());
            prop_assert_eq!(untaxed.paid_by_buyers(), untaxed.received_by_sellers());
            for line in &report.lines {
                if let Some(s) = line.surplus {
                    prop_assert!(s.0 >= 0, "negative surplus {:?}", line);
                }
            }
        }

        prop_assert_eq!(replay(&out.events), ReplayVerdict::Verified);
    }

    #[test]
    fn runs_are_deterministic(steps in prop::collection::vec(step(), 0..16), cfg in config()) {
        let a = run(cfg, inputs(&steps)).unwrap();
        let b = run(cfg, inputs(&steps)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn split_conserves_energy(
        (q, fq) in (1u64..50).prop_flat_map(|q| (Just(q), 1..=q)),
        (d, fd) in (1u64..50).prop_flat_map(|d| (Just(d), 1..=d)),
        t0 in 0u64..1000,
    ) {
        let req = OrderRequest {
            order_id: OrderId(1),
            device_id: DeviceId(1),
            timestamp: None,
            quantity: q as i64,
            market: false,
            price: Some(Price(100)),
            flexible: true,
            duration: d as i64,
            expiration: None,
        };
        let order = make_order(&req, Time(0), &mut Sequencer::new()).unwrap();
        let (fill, residual) = split_partial(&order, Quantity(fq), Duration(fd), Time(t0), OrderId(2)).unwrap();
        prop_assert_eq!((fill.quantity.0, fill.duration.0, fill.start), (fq, fd, Time(t0)));
        match residual {
            None => prop_assert!(fq == q && fd == d),
            Some(r) => {
                prop_assert_eq!(r.priority_key(), order.priority_key());
                prop_assert_eq!(r.activation_time, Some(Time(t0 + fd)));
                prop_assert!(r.activation_time.unwrap() > r.timestamp);
                prop_assert!(fq * fd + r.quantity.0 * r.duration.0 <= q * d);
                // Quantity-only and duration-only splits lose nothing.
                if fd == d || fq == q {
                    prop_assert_eq!(fq * fd + r.quantity.0 * r.duration.0, q * d);
                }
            }
        }
    }

    #[test]
    fn priority_is_a_strict_total_order(
        a in (any::<bool>(), prop::option::of(0i64..5), 0u64..3),
        b in (any::<bool>(), prop::option::of(0i64..5), 0u64..3),
    ) {
        let mut seq = Sequencer::new();
        let mk = |(buy, p, t): (bool, Option<i64>, u64), seq: &mut Sequencer| {
            make_order(
                &OrderRequest {
                    order_id: OrderId(1),
                    device_id: DeviceId(1),
                    timestamp: Some(Time(t)),
                    quantity: if buy { 1 } else { -1 },
                    market: p.is_none(),
                    price: p.map(Price),
                    flexible: true,
                    duration: 1,
                    expiration: None,
                },
                Time(3),
                seq,
            )
            .unwrap()
        };
        let x = mk(a, &mut seq).priority_key();
        let y = mk(b, &mut seq).priority_key();
        prop_assert_ne!(x, y);
        prop_assert_eq!(x.cmp(&y), y.cmp(&x).reverse());
    }
}
