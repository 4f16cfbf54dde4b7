//! Uniform clearing price and per-participant settlement.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::matching::{Marginal, PriceFilteredStacks};
use crate::types::{
    DeviceId, Dispatch, Duration, MidpointRounding, Money, Order, OrderId, Price, Quantity, Side,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SettlementError {
    #[error("no limit order in contract, price is undefined")]
    NoLimitPrice,
    #[error("transaction references unknown order {0}")]
    UnknownOrder(OrderId),
}

/// Price of a round.
///
/// If one limit order was cut to balance the stacks, its limit sets the
/// price. Otherwise the price is the midpoint of the lowest in-contract
/// bid limit and the highest in-contract ask limit; when one side holds
/// only market orders the other side's extreme is used alone.
pub fn clearing_price(
    stacks: &PriceFilteredStacks,
    marginal: &Marginal,
    rounding: MidpointRounding,
) -> Result<Price, SettlementError> {
    if let Some(cut) = marginal.cut {
        let limit = stacks
            .side(cut.side)
            .iter()
            .find(|e| e.order_id == cut.order_id)
            .and_then(|e| e.rank.price());
        if let Some(p) = limit {
            return Ok(p);
        }
    }
    let b_low = stacks.bids.iter().filter_map(|e| e.rank.price()).min();
    let s_high = stacks.asks.iter().filter_map(|e| e.rank.price()).max();
    match (b_low, s_high) {
        (Some(b), Some(s)) => Ok(rounding.midpoint(b, s)),
        (Some(p), None) | (None, Some(p)) => Ok(p),
        (None, None) => Err(SettlementError::NoLimitPrice),
    }
}

/// Network charges levied on buyers on top of the energy price. They take
/// no part in matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TariffSchedule {
    /// Per kWh delivered, in ticks.
    pub per_kwh: Price,
    /// Flat charge per transaction, in ticks.
    pub per_transaction: Price,
}

impl TariffSchedule {
    pub fn charge(&self, quantity: Quantity, duration: Duration) -> Money {
        Money::energy_value(self.per_kwh, quantity, duration)
            + Money::from_ticks(self.per_transaction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Buyer,
    Seller,
}

impl Role {
    pub fn side(self) -> Side {
        match self {
            Role::Buyer => Side::Buy,
            Role::Seller => Side::Sell,
        }
    }
}

/// One side of one transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettlementLine {
    pub round_id: u64,
    /// Index of the transaction within its dispatch.
    pub transaction: usize,
    pub device_id: DeviceId,
    pub order_id: OrderId,
    pub role: Role,
    pub quantity: Quantity,
    pub duration: Duration,
    pub clearing_price: Price,
    pub energy: Money,
    pub tariff: Money,
    /// Paid by a buyer (energy plus tariff) or received by a seller.
    pub amount: Money,
    /// Gain against the order's own limit; `None` for market orders.
    pub surplus: Option<Money>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SettlementReport {
    pub lines: Vec<SettlementLine>,
}

impl SettlementReport {
    pub fn paid_by_buyers(&self) -> Money {
        self.by_role(Role::Buyer).map(|l| l.amount).sum()
    }

    pub fn received_by_sellers(&self) -> Money {
        self.by_role(Role::Seller).map(|l| l.amount).sum()
    }

    pub fn tariff_collected(&self) -> Money {
        self.lines.iter().map(|l| l.tariff).sum()
    }

    /// Buyers pay exactly what sellers receive plus the tariff.
    pub fn is_budget_balanced(&self) -> bool {
        self.paid_by_buyers() == self.received_by_sellers() + self.tariff_collected()
    }

    pub fn extend(&mut self, other: SettlementReport) {
        self.lines.extend(other.lines);
    }

    fn by_role(&self, role: Role) -> impl Iterator<Item = &SettlementLine> {
        self.lines.iter().filter(move |l| l.role == role)
    }
}

/// Settles a dispatch. `orders` must contain every order the dispatch
/// references, as it stood when the round cleared.
pub fn settle(
    dispatch: &Dispatch,
    orders: &[Order],
    tariff: &TariffSchedule,
) -> Result<SettlementReport, SettlementError> {
    let by_id: BTreeMap<OrderId, &Order> = orders.iter().map(|o| (o.order_id, o)).collect();
    let mut lines = Vec::with_capacity(dispatch.transactions.len() * 2);
    for (k, t) in dispatch.transactions.iter().enumerate() {
        let energy = Money::energy_value(t.clearing_price, t.quantity, t.duration);
        for (role, order_id, device_id) in [
            (Role::Buyer, t.buyer_order, t.buyer_device),
            (Role::Seller, t.seller_order, t.seller_device),
        ] {
            let order = by_id
                .get(&order_id)
                .ok_or(SettlementError::UnknownOrder(order_id))?;
            let surplus = order.limit_price().map(|limit| {
                let gain = match role {
                    Role::Buyer => limit - t.clearing_price,
                    Role::Seller => t.clearing_price - limit,
                };
                Money::energy_value(gain, t.quantity, t.duration)
            });
            let fee = match role {
                Role::Buyer => tariff.charge(t.quantity, t.duration),
                Role::Seller => Money::ZERO,
            };
            lines.push(SettlementLine {
                round_id: dispatch.round_id,
                transaction: k,
                device_id,
                order_id,
                role,
                quantity: t.quantity,
                duration: t.duration,
                clearing_price: t.clearing_price,
                energy,
                tariff: fee,
                amount: energy + fee,
                surplus,
            });
        }
    }
    Ok(SettlementReport { lines })
}
