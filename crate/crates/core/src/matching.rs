//! Flexibility-aware stack matching.
//!
//! A clearing round runs in four steps:
//!
//! 1. [`price_filter`] takes the crossing prefixes of both priority lists.
//! 2. [`stack_cut`] equalises total demand and supply by trimming the
//!    lowest-priority order of the larger stack: a flexible order is cut
//!    down, an inflexible one is dropped whole and the step repeats.
//! 3. [`match_stacks`] pairs the balanced stacks greedily in priority order.
//! 4. The round settles at one price (see [`crate::settlement`]); partially
//!    used flexible orders split into a fill and a deferred residual
//!    ([`split_partial`]).
//!
//! [`Matcher::process_order`] repeats rounds until the book is back in
//! equilibrium.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::book::{Book, BookError};
use crate::settlement;
use crate::types::{
    Dispatch, Duration, LimitRank, MidpointRounding, Order, OrderId, Price, Quantity, Side, Time,
    Transaction,
};

/// Residual orders get ids from this offset upward so they never collide
/// with participant-assigned ids.
pub const RESIDUAL_ID_BASE: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackEntry {
    pub order_id: OrderId,
    pub quantity: Quantity,
    pub flexible: bool,
    pub rank: LimitRank,
}

/// The crossing prefixes `(B', S')` with their total quantities.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PriceFilteredStacks {
    pub bids: Vec<StackEntry>,
    pub asks: Vec<StackEntry>,
    pub d_tot: Quantity,
    pub s_tot: Quantity,
}

impl PriceFilteredStacks {
    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    pub fn side(&self, side: Side) -> &[StackEntry] {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.bids.iter().chain(&self.asks).any(|e| e.order_id == id)
    }

    fn recompute(&mut self) {
        self.d_tot = self.bids.iter().map(|e| e.quantity).sum();
        self.s_tot = self.asks.iter().map(|e| e.quantity).sum();
    }
}

fn entry(o: &Order) -> StackEntry {
    StackEntry {
        order_id: o.order_id,
        quantity: o.quantity,
        flexible: o.flexible,
        rank: o.rank(),
    }
}

/// Computes the price-filtered stacks.
///
/// Units are walked pairwise down both priority lists while the bid unit
/// still crosses the ask unit; an order belongs to its stack once any of
/// its units is admitted. The result is then widened on one side by every
/// further order that still crosses the other side's last admitted order.
/// If both sides could widen, doing both would break the price condition,
/// so the walk's result is kept as is.
pub fn price_filter(book: &Book) -> PriceFilteredStacks {
    let bids: Vec<&Order> = book.bids().collect();
    let asks: Vec<&Order> = book.asks().collect();

    let (mut i, mut j) = (0usize, 0usize);
    let mut rem_b = bids.first().map_or(0, |o| o.quantity.0);
    let mut rem_a = asks.first().map_or(0, |o| o.quantity.0);
    let mut last: Option<(usize, usize)> = None;
    while i < bids.len() && j < asks.len() && bids[i].rank().crosses(asks[j].rank()) {
        let units = rem_b.min(rem_a);
        last = Some((i, j));
        rem_b -= units;
        rem_a -= units;
        if rem_b == 0 {
            i += 1;
            rem_b = bids.get(i).map_or(0, |o| o.quantity.0);
        }
        if rem_a == 0 {
            j += 1;
            rem_a = asks.get(j).map_or(0, |o| o.quantity.0);
        }
    }
    let Some((ib, ja)) = last else {
        return PriceFilteredStacks::default();
    };

    let widen_bids = bids[ib + 1..]
        .iter()
        .take_while(|b| b.rank().crosses(asks[ja].rank()))
        .count();
    let widen_asks = asks[ja + 1..]
        .iter()
        .take_while(|a| bids[ib].rank().crosses(a.rank()))
        .count();
    let (nb, na) = match (widen_bids, widen_asks) {
        (wb, 0) => (ib + 1 + wb, ja + 1),
        (0, wa) => (ib + 1, ja + 1 + wa),
        _ => (ib + 1, ja + 1),
    };

    let mut stacks = PriceFilteredStacks {
        bids: bids[..nb].iter().map(|o| entry(o)).collect(),
        asks: asks[..na].iter().map(|o| entry(o)).collect(),
        ..Default::default()
    };
    stacks.recompute();
    stacks
}

/// The one order whose quantity was reduced to balance the stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cut {
    pub order_id: OrderId,
    pub side: Side,
    pub original: Quantity,
    pub kept: Quantity,
}

/// What stack cutting did to reach balance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Marginal {
    pub cut: Option<Cut>,
    /// Orders dropped whole, in the order they were dropped.
    pub excluded: Vec<OrderId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CutOutcome {
    Matched(PriceFilteredStacks, Marginal),
    /// A side ran out before totals met: the inflexible marginal units
    /// hold the book in equilibrium.
    NoMatch {
        excluded: Vec<OrderId>,
    },
}

/// Trims the larger stack from its low-priority end until both totals
/// agree. Balanced input is returned unchanged.
pub fn stack_cut(mut stacks: PriceFilteredStacks) -> CutOutcome {
    let mut marginal = Marginal::default();
    loop {
        if stacks.bids.is_empty() || stacks.asks.is_empty() {
            return CutOutcome::NoMatch {
                excluded: marginal.excluded,
            };
        }
        if stacks.d_tot == stacks.s_tot {
            return CutOutcome::Matched(stacks, marginal);
        }
        let (side, larger, excess) = if stacks.d_tot > stacks.s_tot {
            (Side::Buy, &mut stacks.bids, stacks.d_tot - stacks.s_tot)
        } else {
            (Side::Sell, &mut stacks.asks, stacks.s_tot - stacks.d_tot)
        };
        let tail = larger.last_mut().expect("nonempty");
        if tail.flexible && tail.quantity > excess {
            let original = tail.quantity;
            tail.quantity = original - excess;
            marginal.cut = Some(Cut {
                order_id: tail.order_id,
                side,
                original,
                kept: tail.quantity,
            });
        } else {
            // Inflexible, or flexible but cut to nothing: out of contract.
            marginal.excluded.push(tail.order_id);
            larger.pop();
        }
        stacks.recompute();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pairing {
    pub bid: OrderId,
    pub ask: OrderId,
    pub quantity: Quantity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("stacks are unbalanced: demand {demand}, supply {supply}")]
    Unbalanced { demand: u64, supply: u64 },
}

/// Pairs each bid, best first, with asks in priority order until it is
/// filled. Every unit of both stacks is consumed.
pub fn match_stacks(stacks: &PriceFilteredStacks) -> Result<Vec<Pairing>, MatchError> {
    if stacks.d_tot != stacks.s_tot {
        return Err(MatchError::Unbalanced {
            demand: stacks.d_tot.0,
            supply: stacks.s_tot.0,
        });
    }
    let mut out = Vec::new();
    let mut asks = stacks.asks.iter();
    let mut current = asks.next().map(|a| (a.order_id, a.quantity.0));
    for bid in &stacks.bids {
        let mut need = bid.quantity.0;
        while need > 0 {
            let (ask, left) = current.as_mut().expect("balanced stacks");
            let q = need.min(*left);
            out.push(Pairing {
                bid: bid.order_id,
                ask: *ask,
                quantity: Quantity(q),
            });
            need -= q;
            *left -= q;
            if *left == 0 {
                current = asks.next().map(|a| (a.order_id, a.quantity.0));
            }
        }
    }
    Ok(out)
}

/// One successful clearing round, before it is applied to the book.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clearing {
    /// Stacks as cut: exactly the in-contract orders and quantities.
    pub stacks: PriceFilteredStacks,
    pub marginal: Marginal,
    pub pairings: Vec<Pairing>,
    pub price: Price,
    pub spread_before: Option<Price>,
}

/// Runs one clearing round on a snapshot without touching it.
pub fn clear(book: &Book, rounding: MidpointRounding) -> Option<Clearing> {
    let stacks = price_filter(book);
    if stacks.is_empty() {
        return None;
    }
    let CutOutcome::Matched(stacks, marginal) = stack_cut(stacks) else {
        return None;
    };
    let pairings = match_stacks(&stacks).expect("stack_cut returns balanced stacks");
    // Only a book holding nothing but market orders in contract has no
    // discoverable price; the engine never builds one.
    let price = settlement::clearing_price(&stacks, &marginal, rounding).ok()?;
    Some(Clearing {
        stacks,
        marginal,
        pairings,
        price,
        spread_before: book.spread(),
    })
}

/// The delivered part of a split order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fill {
    pub order_id: OrderId,
    pub quantity: Quantity,
    pub duration: Duration,
    pub start: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("order {0} is inflexible and cannot be partially filled")]
    Inflexible(OrderId),
    #[error("order {0}: fill exceeds the order or is empty")]
    InvalidFill(OrderId),
}

/// Splits an order filled for `filled_q` units over `filled_d` seconds
/// starting at `t0`.
///
/// The residual keeps the parent's limit, flexibility and priority origin.
/// Its quantity is the unfilled quantity (or the whole quantity when only
/// the duration fell short), its duration the unserved duration (or the
/// whole duration when only the quantity fell short), and it becomes live
/// at `t0 + filled_d`.
pub fn split_partial(
    order: &Order,
    filled_q: Quantity,
    filled_d: Duration,
    t0: Time,
    residual_id: OrderId,
) -> Result<(Fill, Option<Order>), SplitError> {
    if filled_q.0 == 0 || filled_d.0 == 0 || filled_q > order.quantity || filled_d > order.duration
    {
        return Err(SplitError::InvalidFill(order.order_id));
    }
    if !order.flexible && filled_q < order.quantity {
        return Err(SplitError::Inflexible(order.order_id));
    }
    let fill = Fill {
        order_id: order.order_id,
        quantity: filled_q,
        duration: filled_d,
        start: t0,
    };
    let q_short = filled_q < order.quantity;
    let d_short = filled_d < order.duration;
    if !order.flexible || (!q_short && !d_short) {
        return Ok((fill, None));
    }
    let quantity = if q_short {
        order.quantity - filled_q
    } else {
        order.quantity
    };
    let duration = if d_short {
        Duration(order.duration.0 - filled_d.0)
    } else {
        order.duration
    };
    let residual = Order {
        order_id: residual_id,
        quantity,
        duration,
        timestamp: t0,
        seq: order.origin.seq,
        activation_time: Some(t0 + filled_d),
        ancestor_id: Some(order.order_id),
        ..order.clone()
    };
    Ok((fill, Some(residual)))
}

/// When a residual re-enters the book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualMode {
    /// At `t0 + filled duration`.
    #[default]
    Deferred,
    /// At `t0`, straight after the round that split it.
    Immediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchConfig {
    pub rounding: MidpointRounding,
    pub residual_mode: ResidualMode,
}

/// Everything one admission did to the book.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchOutcome {
    /// One per clearing round, in order.
    pub dispatches: Vec<Dispatch>,
    /// In-contract orders of each round as they stood before it cleared.
    pub participants: Vec<Vec<Order>>,
    pub marginals: Vec<Marginal>,
    pub residuals: Vec<Order>,
    /// Incoming orders left resting.
    pub rested: Vec<OrderId>,
    /// Unfilled market orders (or their remainders), removed.
    pub canceled: Vec<OrderId>,
    /// The book crossed (or a market order arrived) and nothing cleared.
    pub failed: bool,
    /// Inflexible orders served for less than their duration.
    pub shortfalls: Vec<(OrderId, Duration)>,
}

/// Stateful front end to the matching functions: numbers rounds and
/// residual orders.
#[derive(Debug, Clone, Default)]
pub struct Matcher {
    pub config: MatchConfig,
    next_round: u64,
    next_residual: u64,
}

impl Matcher {
    pub fn new(config: MatchConfig) -> Self {
        Matcher {
            config,
            next_round: 1,
            next_residual: 0,
        }
    }

    /// Admits one order and clears until the book is in equilibrium.
    pub fn process_order(
        &mut self,
        book: &mut Book,
        incoming: Order,
        now: Time,
    ) -> Result<MatchOutcome, BookError> {
        self.process_batch(book, alloc::vec![incoming], now)
    }

    /// Admits several orders atomically, then clears. The last order is
    /// recorded as the trigger of any dispatch.
    pub fn process_batch(
        &mut self,
        book: &mut Book,
        incoming: Vec<Order>,
        now: Time,
    ) -> Result<MatchOutcome, BookError> {
        let mut out = MatchOutcome::default();
        let Some(trigger) = incoming.last().map(|o| o.order_id) else {
            return Ok(out);
        };
        book.set_now(now);
        for (k, o) in incoming.iter().enumerate() {
            if book.contains(o.order_id) || incoming[..k].iter().any(|p| p.order_id == o.order_id) {
                return Err(BookError::Duplicate(o.order_id));
            }
            if o.activation() > now {
                return Err(BookError::NotActive(o.order_id, o.activation().0, now.0));
            }
        }
        for o in &incoming {
            book.insert(o.clone())?;
        }

        let crossing = !price_filter(book).is_empty();
        while let Some(c) = clear(book, self.config.rounding) {
            self.apply(book, c, trigger, now, &mut out);
        }

        for o in &incoming {
            if !book.contains(o.order_id) {
                continue;
            }
            if o.is_market() {
                book.cancel(o.order_id)?;
                out.canceled.push(o.order_id);
                if !o.flexible {
                    out.failed = true;
                }
            } else {
                out.rested.push(o.order_id);
            }
        }
        if out.dispatches.is_empty() && (crossing || incoming.iter().any(Order::is_market)) {
            out.failed = true;
        }
        debug_assert!(book.is_equilibrium());
        Ok(out)
    }

    /// Clears a book that may have left equilibrium because an order was
    /// removed. Blocking inflexible orders can free a crossing when they
    /// expire or are canceled; `trigger` names the removed order.
    pub fn resume(&mut self, book: &mut Book, trigger: OrderId, now: Time) -> MatchOutcome {
        let mut out = MatchOutcome::default();
        book.set_now(now);
        while let Some(c) = clear(book, self.config.rounding) {
            self.apply(book, c, trigger, now, &mut out);
        }
        out
    }

    fn apply(
        &mut self,
        book: &mut Book,
        c: Clearing,
        trigger: OrderId,
        now: Time,
        out: &mut MatchOutcome,
    ) {
        let round_id = self.next_round;
        self.next_round += 1;

        let participants: Vec<Order> = c
            .stacks
            .bids
            .iter()
            .chain(&c.stacks.asks)
            .map(|e| {
                book.get(e.order_id)
                    .expect("stack orders are in the book")
                    .clone()
            })
            .collect();
        let by_id: BTreeMap<OrderId, &Order> =
            participants.iter().map(|o| (o.order_id, o)).collect();

        let mut fills: BTreeMap<OrderId, (Quantity, Duration)> = BTreeMap::new();
        let transactions: Vec<Transaction> = c
            .pairings
            .iter()
            .map(|p| {
                let bid = by_id[&p.bid];
                let ask = by_id[&p.ask];
                let duration = bid.duration.min(ask.duration);
                for id in [p.bid, p.ask] {
                    let f = fills.entry(id).or_default();
                    f.0 = f.0 + p.quantity;
                    f.1 = f.1.max(duration);
                }
                Transaction {
                    seller_device: ask.device_id,
                    buyer_device: bid.device_id,
                    seller_order: ask.order_id,
                    buyer_order: bid.order_id,
                    quantity: p.quantity,
                    clearing_price: c.price,
                    duration,
                    start_time: now,
                }
            })
            .collect();

        for order in &participants {
            book.cancel(order.order_id)
                .expect("participant is in the book");
            let (fq, fd) = fills[&order.order_id];
            if fq == order.quantity && fd == order.duration {
                continue;
            }
            if order.is_market() {
                if fq < order.quantity {
                    out.canceled.push(order.order_id);
                }
                continue;
            }
            if !order.flexible {
                out.shortfalls.push((order.order_id, fd));
                continue;
            }
            let rid = OrderId(RESIDUAL_ID_BASE + self.next_residual);
            self.next_residual += 1;
            let (_, residual) =
                split_partial(order, fq, fd, now, rid).expect("fills come from a balanced round");
            if let Some(mut r) = residual {
                if self.config.residual_mode == ResidualMode::Immediate {
                    r.activation_time = None;
                }
                out.residuals.push(r);
            }
        }

        out.dispatches.push(Dispatch {
            round_id,
            transactions,
            clearing_price: c.price,
            trigger_order: trigger,
            spread_before: c.spread_before,
        });
        out.participants.push(participants);
        out.marginals.push(c.marginal);
    }
}
