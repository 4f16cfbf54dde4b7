//! The pair of priority-sorted order lists.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use thiserror::Error;

use crate::matching;
use crate::types::{LimitRank, Order, OrderId, Price, PriorityKey, Side, Time};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BookError {
    #[error("order {0} is already in the book")]
    Duplicate(OrderId),
    #[error("order {0} is not in the book")]
    Unknown(OrderId),
    #[error("order {0} activates at {1}, after the book clock {2}")]
    NotActive(OrderId, u64, u64),
}

/// Bids and asks, each sorted best first, plus an id index.
///
/// Side lists are keyed by `(PriorityKey, OrderId)` so lookup, insertion
/// and removal are all logarithmic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Book {
    bids: BTreeMap<(PriorityKey, OrderId), ()>,
    asks: BTreeMap<(PriorityKey, OrderId), ()>,
    orders: BTreeMap<OrderId, Order>,
    deadlines: BTreeSet<(Time, OrderId)>,
    now: Time,
}

impl Book {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.orders.contains_key(&id)
    }

    pub fn get(&self, id: OrderId) -> Option<&Order> {
        self.orders.get(&id)
    }

    fn side_map(&self, side: Side) -> &BTreeMap<(PriorityKey, OrderId), ()> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    /// Orders on one side, best priority first.
    pub fn side(&self, side: Side) -> impl DoubleEndedIterator<Item = &Order> + '_ {
        self.side_map(side)
            .keys()
            .map(move |(_, id)| &self.orders[id])
    }

    pub fn bids(&self) -> impl DoubleEndedIterator<Item = &Order> + '_ {
        self.side(Side::Buy)
    }

    pub fn asks(&self) -> impl DoubleEndedIterator<Item = &Order> + '_ {
        self.side(Side::Sell)
    }

    pub fn best(&self, side: Side) -> Option<&Order> {
        self.side(side).next()
    }

    pub fn insert(&mut self, order: Order) -> Result<(), BookError> {
        let id = order.order_id;
        if self.orders.contains_key(&id) {
            return Err(BookError::Duplicate(id));
        }
        if order.activation() > self.now {
            return Err(BookError::NotActive(id, order.activation().0, self.now.0));
        }
        let key = (order.priority_key(), id);
        match order.side {
            Side::Buy => self.bids.insert(key, ()),
            Side::Sell => self.asks.insert(key, ()),
        };
        if let Some(d) = order.deadline() {
            self.deadlines.insert((d, id));
        }
        self.orders.insert(id, order);
        Ok(())
    }

    /// Removes an order and hands it back.
    pub fn cancel(&mut self, id: OrderId) -> Result<Order, BookError> {
        let order = self.orders.remove(&id).ok_or(BookError::Unknown(id))?;
        let key = (order.priority_key(), id);
        match order.side {
            Side::Buy => self.bids.remove(&key),
            Side::Sell => self.asks.remove(&key),
        };
        if let Some(d) = order.deadline() {
            self.deadlines.remove(&(d, id));
        }
        Ok(order)
    }

    /// Moves the clock forward without expiring anything.
    pub(crate) fn set_now(&mut self, now: Time) {
        if now > self.now {
            self.now = now;
        }
    }

    /// Advances the clock to `now` and removes every order whose deadline
    /// has passed (a deadline is inclusive: live at `deadline`, gone at
    /// `deadline + 1`). Returns the removed ids in deadline order.
    pub fn expire_due(&mut self, now: Time) -> Vec<OrderId> {
        self.set_now(now);
        let due: Vec<OrderId> = self
            .deadlines
            .iter()
            .take_while(|(d, _)| *d < self.now)
            .map(|(_, id)| *id)
            .collect();
        for id in &due {
            let _ = self.cancel(*id);
        }
        due
    }

    /// Best ask minus best bid, when both sides hold a limit order at the
    /// top. Undefined with an empty side or a market order on top.
    pub fn spread(&self) -> Option<Price> {
        let bid = self.best(Side::Buy)?.limit_price()?;
        let ask = self.best(Side::Sell)?.limit_price()?;
        Some(ask - bid)
    }

    /// True when no further matching can occur: the spread is positive (or
    /// a side is empty), or the crossing stacks cannot be cleared because
    /// the marginal units are inflexible.
    pub fn is_equilibrium(&self) -> bool {
        let (Some(bid), Some(ask)) = (self.best(Side::Buy), self.best(Side::Sell)) else {
            return true;
        };
        if !bid.rank().crosses(ask.rank()) {
            return true;
        }
        matching::clear(self, Default::default()).is_none()
    }

    /// Full rescan of the index invariants; used by tests.
    pub fn check_invariants(&self) -> bool {
        let sorted = |side: Side| {
            let v: Vec<PriorityKey> = self.side(side).map(Order::priority_key).collect();
            v.windows(2).all(|w| w[0] < w[1])
        };
        let sides_ok = self.bids.keys().all(|(k, id)| {
            self.orders
                .get(id)
                .is_some_and(|o| o.side == Side::Buy && o.priority_key() == *k)
        }) && self.asks.keys().all(|(k, id)| {
            self.orders
                .get(id)
                .is_some_and(|o| o.side == Side::Sell && o.priority_key() == *k)
        });
        let deadlines_ok = self
            .orders
            .values()
            .filter_map(|o| o.deadline().map(|d| (d, o.order_id)))
            .collect::<BTreeSet<_>>()
            == self.deadlines;
        sides_ok
            && deadlines_ok
            && self.bids.len() + self.asks.len() == self.orders.len()
            && sorted(Side::Buy)
            && sorted(Side::Sell)
            && self
                .orders
                .values()
                .all(|o| o.rank() != LimitRank::Market || o.deadline().is_none())
    }
}
