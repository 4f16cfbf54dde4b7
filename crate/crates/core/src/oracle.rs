//! Brute-force reference for small books.
//!
//! The oracle shares nothing with the matcher beyond the domain types. It
//! sorts each side itself, lists every balanced, price-compatible choice of
//! priority prefixes (optionally cutting the last flexible order of one
//! side), and selects the one that trades the most. Among legal clearings
//! that choice is unique, and it is what priority-ordered exclusion
//! produces.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::book::Book;
use crate::types::{Dispatch, MidpointRounding, Order, OrderId, OrderKind, Price, Quantity, Side};

/// Size limits keeping enumeration cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCap {
    pub max_orders: usize,
    pub max_quantity: u64,
}

impl Default for OracleCap {
    fn default() -> Self {
        OracleCap {
            max_orders: 8,
            max_quantity: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("book has {0} orders, above the cap")]
    TooManyOrders(usize),
    #[error("order {0} exceeds the quantity cap")]
    QuantityTooLarge(OrderId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegalClearing {
    /// Included bids in priority order with the quantity taken.
    pub bids: Vec<(OrderId, Quantity)>,
    pub asks: Vec<(OrderId, Quantity)>,
    /// The flexible order whose quantity was reduced, if any.
    pub cut: Option<OrderId>,
    pub quantity: Quantity,
    pub price: Price,
    /// `(bid, ask, quantity)` in pairing order.
    pub pairs: Vec<(OrderId, OrderId, Quantity)>,
}

/// `Less` = better priority.
fn better(a: &Order, b: &Order) -> Ordering {
    let limit = |o: &Order| match o.kind {
        OrderKind::Market => None,
        OrderKind::Limit { limit_price, .. } => Some(limit_price.0),
    };
    let by_price = match (limit(a), limit(b)) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) if a.side == Side::Buy => y.cmp(&x),
        (Some(x), Some(y)) => x.cmp(&y),
    };
    by_price
        .then(a.origin.timestamp.cmp(&b.origin.timestamp))
        .then(a.origin.seq.cmp(&b.origin.seq))
}

fn sorted_side(book: &Book, side: Side) -> Vec<Order> {
    let mut v: Vec<Order> = book
        .bids()
        .chain(book.asks())
        .filter(|o| o.side == side)
        .cloned()
        .collect();
    v.sort_by(better);
    v
}

/// Every bid limit is at least every ask limit; market orders cross all.
fn compatible(bids: &[Order], asks: &[Order]) -> bool {
    let low_bid = bids.iter().filter_map(Order::limit_price).min();
    let high_ask = asks.iter().filter_map(Order::limit_price).max();
    match (low_bid, high_ask) {
        (Some(b), Some(a)) => b >= a,
        _ => true,
    }
}

fn price_of(
    bids: &[Order],
    asks: &[Order],
    cut: Option<&Order>,
    rounding: MidpointRounding,
) -> Option<Price> {
    if let Some(p) = cut.and_then(Order::limit_price) {
        return Some(p);
    }
    let low_bid = bids.iter().filter_map(Order::limit_price).min();
    let high_ask = asks.iter().filter_map(Order::limit_price).max();
    match (low_bid, high_ask) {
        (Some(b), Some(a)) => {
            // Odd sums sit half a tick above `lo`.
            let twice = b.0 + a.0;
            if twice % 2 == 0 {
                Some(Price(twice / 2))
            } else {
                let lo = Price(twice.div_euclid(2));
                let toward_bid = b >= a;
                let up = matches!(
                    (rounding, toward_bid),
                    (MidpointRounding::TowardBuyer, true) | (MidpointRounding::TowardSeller, false)
                );
                Some(if up { Price(lo.0 + 1) } else { lo })
            }
        }
        (Some(p), None) | (None, Some(p)) => Some(p),
        (None, None) => None,
    }
}

/// Expands both sides to units and zips them, merging runs of the same
/// pair.
fn pair_units(
    bids: &[(OrderId, Quantity)],
    asks: &[(OrderId, Quantity)],
) -> Vec<(OrderId, OrderId, Quantity)> {
    let expand = |v: &[(OrderId, Quantity)]| -> Vec<OrderId> {
        v.iter()
            .flat_map(|&(id, q)| core::iter::repeat_n(id, q.0 as usize))
            .collect()
    };
    let mut out: Vec<(OrderId, OrderId, Quantity)> = Vec::new();
    for (b, a) in expand(bids).into_iter().zip(expand(asks)) {
        match out.last_mut() {
            Some((pb, pa, q)) if *pb == b && *pa == a => q.0 += 1,
            _ => out.push((b, a, Quantity(1))),
        }
    }
    out
}

fn take(orders: &[Order], cut: Option<(usize, Quantity)>) -> Vec<(OrderId, Quantity)> {
    orders
        .iter()
        .enumerate()
        .map(|(k, o)| match cut {
            Some((i, kept)) if i == k => (o.order_id, kept),
            _ => (o.order_id, o.quantity),
        })
        .collect()
}

/// All legal clearings of `book`, in no particular order.
pub fn enumerate_clearings(
    book: &Book,
    cap: OracleCap,
    rounding: MidpointRounding,
) -> Result<Vec<LegalClearing>, OracleError> {
    if book.len() > cap.max_orders {
        return Err(OracleError::TooManyOrders(book.len()));
    }
    if let Some(o) = book
        .bids()
        .chain(book.asks())
        .find(|o| o.quantity.0 > cap.max_quantity)
    {
        return Err(OracleError::QuantityTooLarge(o.order_id));
    }
    let bids = sorted_side(book, Side::Buy);
    let asks = sorted_side(book, Side::Sell);
    let mut out = Vec::new();
    for nb in 1..=bids.len() {
        for na in 1..=asks.len() {
            let (pb, pa) = (&bids[..nb], &asks[..na]);
            if !compatible(pb, pa) {
                continue;
            }
            let d: u64 = pb.iter().map(|o| o.quantity.0).sum();
            let s: u64 = pa.iter().map(|o| o.quantity.0).sum();
            let mut push = |bid_cut: Option<(usize, Quantity)>,
                            ask_cut: Option<(usize, Quantity)>| {
                let cut_order = bid_cut
                    .map(|(i, _)| &pb[i])
                    .or(ask_cut.map(|(i, _)| &pa[i]));
                let Some(price) = price_of(pb, pa, cut_order, rounding) else {
                    return;
                };
                let b = take(pb, bid_cut);
                let a = take(pa, ask_cut);
                let quantity = Quantity(b.iter().map(|x| x.1 .0).sum());
                out.push(LegalClearing {
                    pairs: pair_units(&b, &a),
                    bids: b,
                    asks: a,
                    cut: cut_order.map(|o| o.order_id),
                    quantity,
                    price,
                });
            };
            if d == s {
                push(None, None);
            }
            let last_b = &pb[nb - 1];
            if last_b.flexible && d > s && d - s < last_b.quantity.0 {
                push(Some((nb - 1, Quantity(last_b.quantity.0 - (d - s)))), None);
            }
            let last_a = &pa[na - 1];
            if last_a.flexible && s > d && s - d < last_a.quantity.0 {
                push(None, Some((na - 1, Quantity(last_a.quantity.0 - (s - d)))));
            }
        }
    }
    Ok(out)
}

/// The clearing the mechanism should produce: the legal clearing with the
/// largest traded quantity.
pub fn expected_clearing(
    book: &Book,
    cap: OracleCap,
    rounding: MidpointRounding,
) -> Result<Option<LegalClearing>, OracleError> {
    let all = enumerate_clearings(book, cap, rounding)?;
    let best = all.iter().map(|c| c.quantity).max();
    let mut top = all.into_iter().filter(|c| Some(c.quantity) == best);
    let first = top.next();
    debug_assert!(top.next().is_none(), "maximal clearing is unique");
    Ok(first)
}

/// Per-order fills claimed by a matching result.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Claim {
    pub fills: BTreeMap<OrderId, Quantity>,
    pub price: Option<Price>,
    pub pairs: Vec<(OrderId, OrderId, Quantity)>,
}

impl Claim {
    pub fn from_dispatch(d: &Dispatch) -> Self {
        let mut c = Claim {
            price: Some(d.clearing_price),
            ..Default::default()
        };
        for t in &d.transactions {
            for id in [t.buyer_order, t.seller_order] {
                let f = c.fills.entry(id).or_default();
                *f = *f + t.quantity;
            }
            if t.clearing_price != d.clearing_price {
                c.price = None;
            }
            c.pairs.push((t.buyer_order, t.seller_order, t.quantity));
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Discrepancy {
    UnknownOrder(OrderId),
    Overfill(OrderId),
    Conservation {
        demand: u64,
        supply: u64,
    },
    InflexibleAtomicity(OrderId),
    /// A flexible order went unmatched while a lower-priority order on its
    /// side traded.
    PriorityViolation {
        skipped: OrderId,
        matched: OrderId,
    },
    /// Transactions at more than one price.
    MixedPrices,
    NotLegal,
    /// Legal, but not the clearing the mechanism selects.
    NotSelected {
        expected: u64,
        claimed: u64,
    },
    PriceMismatch {
        expected: Price,
        claimed: Option<Price>,
    },
    PairingMismatch,
    MissingDispatch,
    UnexpectedDispatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(Vec<Discrepancy>),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Checks the first clearing round on `book` (the book with the incoming
/// order already inserted) against the oracle.
pub fn check(
    book: &Book,
    dispatch: Option<&Dispatch>,
    cap: OracleCap,
    rounding: MidpointRounding,
) -> Result<Verdict, OracleError> {
    let claim = dispatch.map(Claim::from_dispatch);
    check_claim(book, claim.as_ref(), cap, rounding)
}

pub fn check_claim(
    book: &Book,
    claim: Option<&Claim>,
    cap: OracleCap,
    rounding: MidpointRounding,
) -> Result<Verdict, OracleError> {
    let expected = expected_clearing(book, cap, rounding)?;
    let mut bad = Vec::new();
    let (exp, claim) = match (expected, claim) {
        (None, None) => return Ok(Verdict::Pass),
        (None, Some(c)) if c.fills.is_empty() => return Ok(Verdict::Pass),
        (Some(_), None) => return Ok(Verdict::Fail(alloc::vec![Discrepancy::MissingDispatch])),
        (None, Some(c)) => {
            bad.push(Discrepancy::UnexpectedDispatch);
            (None, c)
        }
        (Some(e), Some(c)) => (Some(e), c),
    };

    let (mut demand, mut supply) = (0u64, 0u64);
    for (&id, &q) in &claim.fills {
        let Some(o) = book.get(id) else {
            bad.push(Discrepancy::UnknownOrder(id));
            continue;
        };
        if q > o.quantity {
            bad.push(Discrepancy::Overfill(id));
        }
        if !o.flexible && q != o.quantity {
            bad.push(Discrepancy::InflexibleAtomicity(id));
        }
        match o.side {
            Side::Buy => demand += q.0,
            Side::Sell => supply += q.0,
        }
    }
    if demand != supply {
        bad.push(Discrepancy::Conservation { demand, supply });
    }
    if claim.price.is_none() {
        bad.push(Discrepancy::MixedPrices);
    }
    for side in [Side::Buy, Side::Sell] {
        let v = sorted_side(book, side);
        let filled = |o: &Order| claim.fills.get(&o.order_id).is_some_and(|q| q.0 > 0);
        if let Some(worst) = v.iter().rposition(filled) {
            if let Some(skip) = v[..worst].iter().find(|o| o.flexible && !filled(o)) {
                bad.push(Discrepancy::PriorityViolation {
                    skipped: skip.order_id,
                    matched: v[worst].order_id,
                });
            }
        }
    }

    let fills_of = |c: &LegalClearing| -> BTreeMap<OrderId, Quantity> {
        c.bids.iter().chain(&c.asks).copied().collect()
    };
    let legal = enumerate_clearings(book, cap, rounding)?;
    if !legal.iter().any(|c| fills_of(c) == claim.fills) {
        bad.push(Discrepancy::NotLegal);
    }
    if let Some(e) = exp {
        if fills_of(&e) != claim.fills {
            bad.push(Discrepancy::NotSelected {
                expected: e.quantity.0,
                claimed: demand,
            });
        } else if e.pairs != claim.pairs {
            bad.push(Discrepancy::PairingMismatch);
        }
        if claim.price != Some(e.price) {
            bad.push(Discrepancy::PriceMismatch {
                expected: e.price,
                claimed: claim.price,
            });
        }
    }
    Ok(if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail(bad)
    })
}
