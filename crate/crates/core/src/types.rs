//! Market domain types.
//!
//! Prices are integer tick counts, quantities integer power units and
//! durations whole seconds. Nothing in the book or the matcher touches
//! floating point.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Sub};

use thiserror::Error;

/// Price as a signed count of ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(pub i64);

impl Price {
    pub const fn ticks(self) -> i64 {
        self.0
    }
}

impl Add for Price {
    type Output = Price;
    fn add(self, rhs: Price) -> Price {
        Price(self.0 + rhs.0)
    }
}

impl Sub for Price {
    type Output = Price;
    fn sub(self, rhs: Price) -> Price {
        Price(self.0 - rhs.0)
    }
}

/// Power quantity in whole units (1 kW by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Quantity(pub u64);

impl Add for Quantity {
    type Output = Quantity;
    fn add(self, rhs: Quantity) -> Quantity {
        Quantity(self.0 + rhs.0)
    }
}

impl Sub for Quantity {
    type Output = Quantity;
    fn sub(self, rhs: Quantity) -> Quantity {
        Quantity(self.0 - rhs.0)
    }
}

impl core::iter::Sum for Quantity {
    fn sum<I: Iterator<Item = Quantity>>(iter: I) -> Quantity {
        Quantity(iter.map(|q| q.0).sum())
    }
}

/// Length of time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(pub u64);

/// Simulation time in seconds since the scenario epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Time(pub u64);

impl Add<Duration> for Time {
    type Output = Time;
    fn add(self, rhs: Duration) -> Time {
        Time(self.0 + rhs.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct OrderId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DeviceId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

/// How the midpoint of two prices is rounded when their tick sum is odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MidpointRounding {
    /// Round half a tick toward the bid (the higher price).
    #[default]
    TowardBuyer,
    /// Round half a tick toward the ask.
    TowardSeller,
}

impl MidpointRounding {
    /// Midpoint of a bid and an ask price, snapped to a tick.
    pub fn midpoint(self, bid: Price, ask: Price) -> Price {
        let sum = bid.0 + ask.0;
        let down = sum.div_euclid(2);
        if sum.rem_euclid(2) == 0 {
            return Price(down);
        }
        // Half a tick between `down` and `down + 1`; pick the end nearer the
        // favoured party.
        let toward_bid = bid.0 >= ask.0;
        match (self, toward_bid) {
            (MidpointRounding::TowardBuyer, true) | (MidpointRounding::TowardSeller, false) => {
                Price(down + 1)
            }
            _ => Price(down),
        }
    }
}

/// Decimal tick size: one tick is `units * 10^-scale` currency units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickSize {
    units: u64,
    scale: u32,
}

impl Default for TickSize {
    fn default() -> Self {
        TickSize { units: 1, scale: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecimalError {
    #[error("`{0}` is not a decimal number")]
    Malformed(String),
    #[error("`{0}` is not a whole number of ticks")]
    OffGrid(String),
    #[error("`{0}` is out of range")]
    Overflow(String),
    #[error("tick size must be positive")]
    ZeroTick,
}

/// Parses a plain decimal (`-12.034`, `4`, `.5`) into `(mantissa, scale)`.
fn parse_decimal(s: &str) -> Result<(i128, u32), DecimalError> {
    let bad = || DecimalError::Malformed(String::from(s));
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    if frac_part.len() > 18 {
        return Err(DecimalError::Overflow(String::from(s)));
    }
    let mut mantissa: i128 = 0;
    for b in int_part.bytes().chain(frac_part.bytes()) {
        mantissa = mantissa
            .checked_mul(10)
            .and_then(|m| m.checked_add(i128::from(b - b'0')))
            .ok_or_else(|| DecimalError::Overflow(String::from(s)))?;
    }
    Ok((
        if neg { -mantissa } else { mantissa },
        frac_part.len() as u32,
    ))
}

fn pow10(n: u32) -> i128 {
    10i128.pow(n)
}

impl TickSize {
    pub fn parse(s: &str) -> Result<TickSize, DecimalError> {
        let (m, scale) = parse_decimal(s)?;
        if m <= 0 {
            return Err(DecimalError::ZeroTick);
        }
        let units = u64::try_from(m).map_err(|_| DecimalError::Overflow(String::from(s)))?;
        Ok(TickSize { units, scale })
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Converts a decimal currency amount to ticks; it must lie on the grid.
    pub fn parse_price(&self, s: &str) -> Result<Price, DecimalError> {
        let (m, scale) = parse_decimal(s)?;
        // value = m / 10^scale ; tick = units / 10^self.scale
        // ticks = m * 10^self.scale / (units * 10^scale)
        let num = m
            .checked_mul(pow10(self.scale))
            .ok_or_else(|| DecimalError::Overflow(String::from(s)))?;
        let den = i128::from(self.units) * pow10(scale);
        if num % den != 0 {
            return Err(DecimalError::OffGrid(String::from(s)));
        }
        i64::try_from(num / den)
            .map(Price)
            .map_err(|_| DecimalError::Overflow(String::from(s)))
    }

    /// Renders a price with exactly `scale` decimals.
    pub fn format_price(&self, p: Price) -> String {
        self.format_scaled(i128::from(p.0) * i128::from(self.units))
    }

    /// Renders `ticks_times_3600 / 3600` ticks, rounded half away from zero
    /// to a whole tick.
    pub fn format_money(&self, money: Money) -> String {
        let v = money.0;
        let q = v / 3600;
        let r = v % 3600;
        let ticks = if 2 * r.abs() >= 3600 {
            q + v.signum()
        } else {
            q
        };
        self.format_scaled(ticks * i128::from(self.units))
    }

    fn format_scaled(&self, v: i128) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        let neg = v < 0;
        let a = v.unsigned_abs();
        let p = pow10(self.scale) as u128;
        if neg {
            out.push('-');
        }
        let _ = write!(out, "{}", a / p);
        if self.scale > 0 {
            let _ = write!(out, ".{:0width$}", a % p, width = self.scale as usize);
        }
        out
    }
}

/// Money in units of tick x kW x second; one tick-kWh is 3600 units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(pub i128);

impl Money {
    pub const ZERO: Money = Money(0);

    /// Value of `quantity` kW for `duration` seconds at `price` per kWh.
    pub fn energy_value(price: Price, quantity: Quantity, duration: Duration) -> Money {
        Money(i128::from(price.0) * i128::from(quantity.0) * i128::from(duration.0))
    }

    /// A flat amount given in ticks.
    pub fn from_ticks(p: Price) -> Money {
        Money(i128::from(p.0) * 3600)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl core::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderKind {
    Limit {
        limit_price: Price,
        /// Relative to activation; `None` rests until canceled.
        expiration: Option<Duration>,
    },
    Market,
}

/// Ancestral arrival of an order; split residuals inherit it unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Origin {
    pub timestamp: Time,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub order_id: OrderId,
    pub device_id: DeviceId,
    pub side: Side,
    pub quantity: Quantity,
    pub duration: Duration,
    pub flexible: bool,
    pub kind: OrderKind,
    pub timestamp: Time,
    pub seq: u64,
    pub activation_time: Option<Time>,
    pub ancestor_id: Option<OrderId>,
    pub origin: Origin,
}

impl Order {
    pub fn is_market(&self) -> bool {
        matches!(self.kind, OrderKind::Market)
    }

    pub fn limit_price(&self) -> Option<Price> {
        match self.kind {
            OrderKind::Limit { limit_price, .. } => Some(limit_price),
            OrderKind::Market => None,
        }
    }

    pub fn rank(&self) -> LimitRank {
        match self.kind {
            OrderKind::Limit { limit_price, .. } => LimitRank::Limit(limit_price),
            OrderKind::Market => LimitRank::Market,
        }
    }

    /// Time from which the order is live in the book.
    pub fn activation(&self) -> Time {
        self.activation_time.unwrap_or(self.timestamp)
    }

    /// Last instant at which the order is still live. Market orders never
    /// expire by time.
    pub fn deadline(&self) -> Option<Time> {
        match self.kind {
            OrderKind::Limit {
                expiration: Some(e),
                ..
            } => Some(self.activation() + e),
            _ => None,
        }
    }

    /// Signed quantity: buys positive, sells negative.
    pub fn signed_quantity(&self) -> i128 {
        match self.side {
            Side::Buy => i128::from(self.quantity.0),
            Side::Sell => -i128::from(self.quantity.0),
        }
    }

    pub fn priority_key(&self) -> PriorityKey {
        priority_key(self)
    }
}

/// Limit component of a priority key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LimitRank {
    Market,
    Limit(Price),
}

impl LimitRank {
    /// Whether a bid at `self` can trade with an ask at `ask`.
    pub fn crosses(self, ask: LimitRank) -> bool {
        match (self, ask) {
            (LimitRank::Limit(b), LimitRank::Limit(a)) => b >= a,
            _ => true,
        }
    }

    pub fn price(self) -> Option<Price> {
        match self {
            LimitRank::Limit(p) => Some(p),
            LimitRank::Market => None,
        }
    }
}

/// Price-time priority. `Less` means better; keys of different sides
/// order buys first so the relation stays total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PriorityKey {
    pub side: Side,
    pub limit_rank: LimitRank,
    pub origin_timestamp: Time,
    pub origin_seq: u64,
}

impl Ord for PriorityKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.side
            .cmp(&other.side)
            .then_with(|| match (self.limit_rank, other.limit_rank) {
                (LimitRank::Market, LimitRank::Market) => Ordering::Equal,
                (LimitRank::Market, LimitRank::Limit(_)) => Ordering::Less,
                (LimitRank::Limit(_), LimitRank::Market) => Ordering::Greater,
                (LimitRank::Limit(a), LimitRank::Limit(b)) => match self.side {
                    Side::Buy => b.cmp(&a),
                    Side::Sell => a.cmp(&b),
                },
            })
            .then_with(|| self.origin_timestamp.cmp(&other.origin_timestamp))
            .then_with(|| self.origin_seq.cmp(&other.origin_seq))
    }
}

impl PartialOrd for PriorityKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn priority_key(order: &Order) -> PriorityKey {
    PriorityKey {
        side: order.side,
        limit_rank: order.rank(),
        origin_timestamp: order.origin.timestamp,
        origin_seq: order.origin.seq,
    }
}

/// An order as described by a participant, before validation.
///
/// Quantity uses the signed convention (positive buys, negative sells);
/// duration is signed so that nonpositive input can be rejected rather
/// than wrapped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderRequest {
    pub order_id: OrderId,
    pub device_id: DeviceId,
    /// Priority timestamp; defaults to the admission time.
    pub timestamp: Option<Time>,
    pub quantity: i64,
    pub market: bool,
    pub price: Option<Price>,
    pub flexible: bool,
    pub duration: i64,
    pub expiration: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("order {0}: quantity must be nonzero")]
    ZeroQuantity(OrderId),
    #[error("order {0}: duration must be positive")]
    NonPositiveDuration(OrderId),
    #[error("order {0}: market orders carry no price")]
    MarketWithPrice(OrderId),
    #[error("order {0}: market orders carry no expiration")]
    MarketWithExpiration(OrderId),
    #[error("order {0}: limit orders need a price")]
    LimitWithoutPrice(OrderId),
    #[error("order {0}: expiration must be positive")]
    ZeroExpiration(OrderId),
}

/// Monotone submission counter.
#[derive(Debug, Clone, Default)]
pub struct Sequencer {
    next: u64,
}

impl Sequencer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_seq(&mut self) -> u64 {
        let s = self.next;
        self.next += 1;
        s
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

/// Validates a request and stamps it with a sequence number.
pub fn make_order(raw: &OrderRequest, now: Time, seq: &mut Sequencer) -> Result<Order, OrderError> {
    let id = raw.order_id;
    if raw.quantity == 0 {
        return Err(OrderError::ZeroQuantity(id));
    }
    if raw.duration <= 0 {
        return Err(OrderError::NonPositiveDuration(id));
    }
    let kind = if raw.market {
        if raw.price.is_some() {
            return Err(OrderError::MarketWithPrice(id));
        }
        if raw.expiration.is_some() {
            return Err(OrderError::MarketWithExpiration(id));
        }
        OrderKind::Market
    } else {
        let limit_price = raw.price.ok_or(OrderError::LimitWithoutPrice(id))?;
        if raw.expiration == Some(0) {
            return Err(OrderError::ZeroExpiration(id));
        }
        OrderKind::Limit {
            limit_price,
            expiration: raw.expiration.map(Duration),
        }
    };
    let side = if raw.quantity > 0 {
        Side::Buy
    } else {
        Side::Sell
    };
    let timestamp = raw.timestamp.unwrap_or(now);
    let s = seq.next_seq();
    Ok(Order {
        order_id: id,
        device_id: raw.device_id,
        side,
        quantity: Quantity(raw.quantity.unsigned_abs()),
        duration: Duration(raw.duration as u64),
        flexible: raw.flexible,
        kind,
        timestamp,
        seq: s,
        activation_time: (now > timestamp).then_some(now),
        ancestor_id: None,
        origin: Origin { timestamp, seq: s },
    })
}

/// One cleared trade.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub seller_device: DeviceId,
    pub buyer_device: DeviceId,
    pub seller_order: OrderId,
    pub buyer_order: OrderId,
    pub quantity: Quantity,
    pub clearing_price: Price,
    pub duration: Duration,
    pub start_time: Time,
}

/// All transactions cleared by one matching round at one price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub round_id: u64,
    pub transactions: Vec<Transaction>,
    pub clearing_price: Price,
    pub trigger_order: OrderId,
    /// Spread of the book immediately before this round was cleared.
    pub spread_before: Option<Price>,
}
