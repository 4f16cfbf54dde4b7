#![allow(dead_code)]

use lob_core::engine::{Action, Input};
use lob_core::types::{DeviceId, OrderId, OrderRequest, Price};
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub struct RawOrder {
    pub buy: bool,
    pub qty: u64,
    /// `None` for a market order.
    pub price: Option<i64>,
    pub flexible: bool,
    pub duration: i64,
    pub expiration: Option<u64>,
}

impl RawOrder {
    pub fn request(&self, id: u64) -> OrderRequest {
        let q = self.qty as i64;
        OrderRequest {
            order_id: OrderId(id),
            device_id: DeviceId(id),
            timestamp: None,
            quantity: if self.buy { q } else { -q },
            market: self.price.is_none(),
            price: self.price.map(Price),
            flexible: self.flexible,
            duration: self.duration,
            expiration: self.price.and(self.expiration),
        }
    }
}

/// Limit orders on a ten-level price grid with an occasional market order.
pub fn raw_order(max_qty: u64, market_weight: u32) -> impl Strategy<Value = RawOrder> {
    (
        any::<bool>(),
        1..=max_qty,
        prop_oneof![
            market_weight => Just(None),
            (20 - market_weight.min(19)) => (0i64..10).prop_map(|p| Some(p * 10)),
        ],
        any::<bool>(),
        prop_oneof![3 => Just(10i64), 1 => 1i64..=20],
        prop_oneof![1 => Just(None), 3 => (1u64..=40).prop_map(Some)],
    )
        .prop_map(
            |(buy, qty, price, flexible, duration, expiration)| RawOrder {
                buy,
                qty,
                price,
                flexible,
                duration,
                expiration,
            },
        )
}

#[derive(Debug, Clone)]
pub enum Step {
    Submit { gap: u64, order: RawOrder },
    Cancel { gap: u64, pick: usize },
}

pub fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        6 => (0u64..8, raw_order(5, 2)).prop_map(|(gap, order)| Step::Submit { gap, order }),
        1 => (0u64..8, any::<usize>()).prop_map(|(gap, pick)| Step::Cancel { gap, pick }),
    ]
}

/// Turns generated steps into engine inputs with ids 1, 2, ...
pub fn inputs(steps: &[Step]) -> Vec<Input> {
    let mut t = 0;
    let mut ids = 0u64;
    steps
        .iter()
        .map(|s| match s {
            Step::Submit { gap, order } => {
                t += gap;
                ids += 1;
                Input {
                    time: lob_core::Time(t),
                    action: Action::Submit(order.request(ids)),
                }
            }
            Step::Cancel { gap, pick } => {
                t += gap;
                Input {
                    time: lob_core::Time(t),
                    action: Action::Cancel(OrderId(1 + (*pick as u64) % ids.max(1))),
                }
            }
        })
        .collect()
}
