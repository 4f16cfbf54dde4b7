mod common;

use common::{raw_order, RawOrder};
use lob_core::matching::{clear, MatchConfig, Matcher};
use lob_core::oracle::{check, check_claim, expected_clearing, Claim, OracleCap, Verdict};
use lob_core::types::{make_order, MidpointRounding, Sequencer, Time};
use lob_core::Book;
use proptest::prelude::*;

const CAP: OracleCap = OracleCap {
    max_orders: 8,
    max_quantity: 6,
};

fn rounding() -> impl Strategy<Value = MidpointRounding> {
    prop_oneof![
        Just(MidpointRounding::TowardBuyer),
        Just(MidpointRounding::TowardSeller)
    ]
}

fn raw_book(orders: &[RawOrder]) -> Book {
    let mut seq = Sequencer::new();
    let mut book = Book::new();
    for (k, o) in orders.iter().enumerate() {
        let order = make_order(&o.request(k as u64 + 1), Time(0), &mut seq).unwrap();
        book.insert(order).unwrap();
    }
    book
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    /// One clearing round on an arbitrary limit-order book.
    #[test]
    fn single_round_matches_oracle(
        orders in prop::collection::vec(raw_order(4, 0), 1..=6),
        r in rounding(),
    ) {
        let book = raw_book(&orders);
        let got = clear(&book, r);
        let want = expected_clearing(&book, CAP, r).unwrap();
        prop_assert_eq!(got.is_some(), want.is_some());
        let claim = got.map(|c| Claim {
            fills: c
                .stacks
                .bids
                .iter()
                .chain(&c.stacks.asks)
                .map(|e| (e.order_id, e.quantity))
                .collect(),
            price: Some(c.price),
            pairs: c.pairings.iter().map(|p| (p.bid, p.ask, p.quantity)).collect(),
        });
        let verdict = check_claim(&book, claim.as_ref(), CAP, r).unwrap();
        prop_assert_eq!(verdict, Verdict::Pass);
    }

    /// The same through the sequential path: earlier orders are processed
    /// one by one (so the book rests in equilibrium) and the last one
    /// triggers the round under test.
    #[test]
    fn incoming_order_matches_oracle(
        orders in prop::collection::vec(raw_order(4, 2), 1..=6),
        r in rounding(),
    ) {
        let mut seq = Sequencer::new();
        let mut book = Book::new();
        let mut m = Matcher::new(MatchConfig { rounding: r, ..Default::default() });
        let n = orders.len();
        for (k, o) in orders[..n - 1].iter().enumerate() {
            let order = make_order(&o.request(k as u64 + 1), Time(0), &mut seq).unwrap();
            m.process_order(&mut book, order, Time(0)).unwrap();
            prop_assert!(book.is_equilibrium());
        }
        let incoming = make_order(&orders[n - 1].request(n as u64), Time(0), &mut seq).unwrap();
        let mut pre = book.clone();
        pre.insert(incoming.clone()).unwrap();
        let out = m.process_order(&mut book, incoming, Time(0)).unwrap();
        let verdict = check(&pre, out.dispatches.first(), CAP, r).unwrap();
        prop_assert_eq!(verdict, Verdict::Pass);
        prop_assert!(book.is_equilibrium());
        prop_assert!(book.check_invariants());
        // Market orders never rest.
        prop_assert!(book.bids().chain(book.asks()).all(|o| !o.is_market()));
    }
}
