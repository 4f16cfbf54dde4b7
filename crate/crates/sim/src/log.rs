//! JSON Lines event log.
//!
//! One event per line as `{"index", "time", "type", "payload"}`. Payload
//! shapes are fixed per event type and fields are written in declaration
//! order, so equal runs give byte-identical logs. Orders use the column
//! names of the tabular book layout (`Device ID`, `Order ID`, ...), with
//! prices in integer ticks and quantities signed (positive buys).

use std::io::{self, BufRead, Write};

use lob_core::engine::{CancelReason, EngineConfig, Event, EventKind, RejectReason, ResidualMode};
use lob_core::matching::{Cut, Marginal};
use lob_core::types::{
    DeviceId, Dispatch, Duration, MidpointRounding, Order, OrderError, OrderId, OrderKind,
    OrderRequest, Origin, Price, Quantity, Side, TickSize, Time, Transaction,
};
use lob_core::TariffSchedule;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub index: u64,
    pub time: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Started(ConfigRecord),
    Submitted {
        order: OrderRecord,
        batch: Option<u64>,
    },
    Rejected {
        request: RequestRecord,
        reason: RejectRecord,
        batch: Option<u64>,
    },
    CancelRequested {
        order_id: u64,
    },
    Canceled {
        order_id: u64,
        reason: CancelRecord,
    },
    Expired {
        order_id: u64,
    },
    ResidualScheduled(OrderRecord),
    ResidualActivated {
        order_id: u64,
    },
    Matched {
        dispatch: DispatchRecord,
        marginal: MarginalRecord,
    },
    MatchFailed {
        order_id: u64,
    },
    DurationShortfall {
        order_id: u64,
        filled: u64,
    },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub tick_size: String,
    pub residual_mode: ResidualRecord,
    pub rounding: RoundingRecord,
    pub tariff_per_kwh: i64,
    pub tariff_per_transaction: i64,
    pub stop_time: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualRecord {
    Deferred,
    Immediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingRecord {
    TowardBuyer,
    TowardSeller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderType {
    Limit,
    Market,
}

/// A resting order with its engine bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRecord {
    #[serde(rename = "Device ID")]
    pub device_id: u64,
    #[serde(rename = "Order ID")]
    pub order_id: u64,
    #[serde(rename = "Timestamp")]
    pub timestamp: u64,
    #[serde(rename = "Quantity")]
    pub quantity: i64,
    #[serde(rename = "Price")]
    pub price: Option<i64>,
    #[serde(rename = "isPowerFlexible")]
    pub flexible: bool,
    #[serde(rename = "Duration")]
    pub duration: u64,
    #[serde(rename = "Expiration")]
    pub expiration: Option<u64>,
    #[serde(rename = "Type")]
    pub kind: OrderType,
    pub seq: u64,
    pub activation_time: Option<u64>,
    pub ancestor_id: Option<u64>,
    pub origin_timestamp: u64,
    pub origin_seq: u64,
}

/// A submission as received, valid or not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    #[serde(rename = "Device ID")]
    pub device_id: u64,
    #[serde(rename = "Order ID")]
    pub order_id: u64,
    #[serde(rename = "Timestamp")]
    pub timestamp: Option<u64>,
    #[serde(rename = "Quantity")]
    pub quantity: i64,
    #[serde(rename = "Price")]
    pub price: Option<i64>,
    #[serde(rename = "isPowerFlexible")]
    pub flexible: bool,
    #[serde(rename = "Duration")]
    pub duration: i64,
    #[serde(rename = "Expiration")]
    pub expiration: Option<u64>,
    #[serde(rename = "Type")]
    pub kind: OrderType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectRecord {
    DuplicateId,
    ReservedId,
    ZeroQuantity,
    NonPositiveDuration,
    MarketWithPrice,
    MarketWithExpiration,
    LimitWithoutPrice,
    ZeroExpiration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancelRecord {
    Requested,
    MarketRemainder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub round_id: u64,
    pub clearing_price: i64,
    pub trigger_order: u64,
    pub spread_before: Option<i64>,
    pub transactions: Vec<TransactionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub seller_device: u64,
    pub buyer_device: u64,
    pub seller_order: u64,
    pub buyer_order: u64,
    pub quantity: u64,
    pub clearing_price: i64,
    pub duration: u64,
    pub start_time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalRecord {
    pub cut: Option<CutRecord>,
    pub excluded: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutRecord {
    pub order_id: u64,
    pub side: SideRecord,
    pub original: u64,
    pub kept: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideRecord {
    Buy,
    Sell,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

fn invalid(line: usize, message: impl Into<String>) -> LogError {
    LogError::Invalid {
        line,
        message: message.into(),
    }
}

impl From<&EngineConfig> for ConfigRecord {
    fn from(c: &EngineConfig) -> Self {
        ConfigRecord {
            tick_size: c.tick_size.format_price(Price(1)),
            residual_mode: match c.residual_mode {
                ResidualMode::Deferred => ResidualRecord::Deferred,
                ResidualMode::Immediate => ResidualRecord::Immediate,
            },
            rounding: match c.rounding {
                MidpointRounding::TowardBuyer => RoundingRecord::TowardBuyer,
                MidpointRounding::TowardSeller => RoundingRecord::TowardSeller,
            },
            tariff_per_kwh: c.tariff.per_kwh.0,
            tariff_per_transaction: c.tariff.per_transaction.0,
            stop_time: c.stop_time.map(|t| t.0),
        }
    }
}

impl ConfigRecord {
    fn to_config(&self, line: usize) -> Result<EngineConfig, LogError> {
        Ok(EngineConfig {
            tick_size: TickSize::parse(&self.tick_size)
                .map_err(|e| invalid(line, e.to_string()))?,
            residual_mode: match self.residual_mode {
                ResidualRecord::Deferred => ResidualMode::Deferred,
                ResidualRecord::Immediate => ResidualMode::Immediate,
            },
            rounding: match self.rounding {
                RoundingRecord::TowardBuyer => MidpointRounding::TowardBuyer,
                RoundingRecord::TowardSeller => MidpointRounding::TowardSeller,
            },
            tariff: TariffSchedule {
                per_kwh: Price(self.tariff_per_kwh),
                per_transaction: Price(self.tariff_per_transaction),
            },
            stop_time: self.stop_time.map(Time),
        })
    }
}

impl From<&Order> for OrderRecord {
    fn from(o: &Order) -> Self {
        let (kind, price, expiration) = match o.kind {
            OrderKind::Limit {
                limit_price,
                expiration,
            } => (
                OrderType::Limit,
                Some(limit_price.0),
                expiration.map(|d| d.0),
            ),
            OrderKind::Market => (OrderType::Market, None, None),
        };
        OrderRecord {
            device_id: o.device_id.0,
            order_id: o.order_id.0,
            timestamp: o.timestamp.0,
            quantity: o.signed_quantity() as i64,
            price,
            flexible: o.flexible,
            duration: o.duration.0,
            expiration,
            kind,
            seq: o.seq,
            activation_time: o.activation_time.map(|t| t.0),
            ancestor_id: o.ancestor_id.map(|i| i.0),
            origin_timestamp: o.origin.timestamp.0,
            origin_seq: o.origin.seq,
        }
    }
}

impl OrderRecord {
    pub fn to_order(&self, line: usize) -> Result<Order, LogError> {
        if self.quantity == 0 {
            return Err(invalid(line, "order with zero quantity"));
        }
        let kind = match (self.kind, self.price) {
            (OrderType::Limit, Some(p)) => OrderKind::Limit {
                limit_price: Price(p),
                expiration: self.expiration.map(Duration),
            },
            (OrderType::Market, None) if self.expiration.is_none() => OrderKind::Market,
            _ => {
                return Err(invalid(
                    line,
                    format!(
                        "order {}: Type, Price and Expiration disagree",
                        self.order_id
                    ),
                ))
            }
        };
        Ok(Order {
            order_id: OrderId(self.order_id),
            device_id: DeviceId(self.device_id),
            side: if self.quantity > 0 {
                Side::Buy
            } else {
                Side::Sell
            },
            quantity: Quantity(self.quantity.unsigned_abs()),
            duration: Duration(self.duration),
            flexible: self.flexible,
            kind,
            timestamp: Time(self.timestamp),
            seq: self.seq,
            activation_time: self.activation_time.map(Time),
            ancestor_id: self.ancestor_id.map(OrderId),
            origin: Origin {
                timestamp: Time(self.origin_timestamp),
                seq: self.origin_seq,
            },
        })
    }
}

impl From<&OrderRequest> for RequestRecord {
    fn from(r: &OrderRequest) -> Self {
        RequestRecord {
            device_id: r.device_id.0,
            order_id: r.order_id.0,
            timestamp: r.timestamp.map(|t| t.0),
            quantity: r.quantity,
            price: r.price.map(|p| p.0),
            flexible: r.flexible,
            duration: r.duration,
            expiration: r.expiration,
            kind: if r.market {
                OrderType::Market
            } else {
                OrderType::Limit
            },
        }
    }
}

impl From<&RequestRecord> for OrderRequest {
    fn from(r: &RequestRecord) -> Self {
        OrderRequest {
            order_id: OrderId(r.order_id),
            device_id: DeviceId(r.device_id),
            timestamp: r.timestamp.map(Time),
            quantity: r.quantity,
            market: r.kind == OrderType::Market,
            price: r.price.map(Price),
            flexible: r.flexible,
            duration: r.duration,
            expiration: r.expiration,
        }
    }
}

impl From<&RejectReason> for RejectRecord {
    fn from(r: &RejectReason) -> Self {
        match r {
            RejectReason::DuplicateId => RejectRecord::DuplicateId,
            RejectReason::ReservedId => RejectRecord::ReservedId,
            RejectReason::Invalid(e) => match e {
                OrderError::ZeroQuantity(_) => RejectRecord::ZeroQuantity,
                OrderError::NonPositiveDuration(_) => RejectRecord::NonPositiveDuration,
                OrderError::MarketWithPrice(_) => RejectRecord::MarketWithPrice,
                OrderError::MarketWithExpiration(_) => RejectRecord::MarketWithExpiration,
                OrderError::LimitWithoutPrice(_) => RejectRecord::LimitWithoutPrice,
                OrderError::ZeroExpiration(_) => RejectRecord::ZeroExpiration,
            },
        }
    }
}

impl RejectRecord {
    fn to_reason(self, id: OrderId) -> RejectReason {
        match self {
            RejectRecord::DuplicateId => RejectReason::DuplicateId,
            RejectRecord::ReservedId => RejectReason::ReservedId,
            RejectRecord::ZeroQuantity => RejectReason::Invalid(OrderError::ZeroQuantity(id)),
            RejectRecord::NonPositiveDuration => {
                RejectReason::Invalid(OrderError::NonPositiveDuration(id))
            }
            RejectRecord::MarketWithPrice => RejectReason::Invalid(OrderError::MarketWithPrice(id)),
            RejectRecord::MarketWithExpiration => {
                RejectReason::Invalid(OrderError::MarketWithExpiration(id))
            }
            RejectRecord::LimitWithoutPrice => {
                RejectReason::Invalid(OrderError::LimitWithoutPrice(id))
            }
            RejectRecord::ZeroExpiration => RejectReason::Invalid(OrderError::ZeroExpiration(id)),
        }
    }
}

impl From<&Dispatch> for DispatchRecord {
    fn from(d: &Dispatch) -> Self {
        DispatchRecord {
            round_id: d.round_id,
            clearing_price: d.clearing_price.0,
            trigger_order: d.trigger_order.0,
            spread_before: d.spread_before.map(|p| p.0),
            transactions: d
                .transactions
                .iter()
                .map(|t| TransactionRecord {
                    seller_device: t.seller_device.0,
                    buyer_device: t.buyer_device.0,
                    seller_order: t.seller_order.0,
                    buyer_order: t.buyer_order.0,
                    quantity: t.quantity.0,
                    clearing_price: t.clearing_price.0,
                    duration: t.duration.0,
                    start_time: t.start_time.0,
                })
                .collect(),
        }
    }
}

impl From<&DispatchRecord> for Dispatch {
    fn from(d: &DispatchRecord) -> Self {
        Dispatch {
            round_id: d.round_id,
            clearing_price: Price(d.clearing_price),
            trigger_order: OrderId(d.trigger_order),
            spread_before: d.spread_before.map(Price),
            transactions: d
                .transactions
                .iter()
                .map(|t| Transaction {
                    seller_device: DeviceId(t.seller_device),
                    buyer_device: DeviceId(t.buyer_device),
                    seller_order: OrderId(t.seller_order),
                    buyer_order: OrderId(t.buyer_order),
                    quantity: Quantity(t.quantity),
                    clearing_price: Price(t.clearing_price),
                    duration: Duration(t.duration),
                    start_time: Time(t.start_time),
                })
                .collect(),
        }
    }
}

impl From<&Marginal> for MarginalRecord {
    fn from(m: &Marginal) -> Self {
        MarginalRecord {
            cut: m.cut.map(|c| CutRecord {
                order_id: c.order_id.0,
                side: match c.side {
                    Side::Buy => SideRecord::Buy,
                    Side::Sell => SideRecord::Sell,
                },
                original: c.original.0,
                kept: c.kept.0,
            }),
            excluded: m.excluded.iter().map(|i| i.0).collect(),
        }
    }
}

impl From<&MarginalRecord> for Marginal {
    fn from(m: &MarginalRecord) -> Self {
        Marginal {
            cut: m.cut.map(|c| Cut {
                order_id: OrderId(c.order_id),
                side: match c.side {
                    SideRecord::Buy => Side::Buy,
                    SideRecord::Sell => Side::Sell,
                },
                original: Quantity(c.original),
                kept: Quantity(c.kept),
            }),
            excluded: m.excluded.iter().copied().map(OrderId).collect(),
        }
    }
}

impl From<&Event> for Record {
    fn from(e: &Event) -> Self {
        let body = match &e.kind {
            EventKind::Started(c) => Body::Started(c.into()),
            EventKind::Submitted { order, batch } => Body::Submitted {
                order: order.into(),
                batch: *batch,
            },
            EventKind::Rejected {
                request,
                reason,
                batch,
            } => Body::Rejected {
                request: request.into(),
                reason: reason.into(),
                batch: *batch,
            },
            EventKind::CancelRequested { order_id } => Body::CancelRequested {
                order_id: order_id.0,
            },
            EventKind::Canceled { order_id, reason } => Body::Canceled {
                order_id: order_id.0,
                reason: match reason {
                    CancelReason::Requested => CancelRecord::Requested,
                    CancelReason::MarketRemainder => CancelRecord::MarketRemainder,
                },
            },
            EventKind::Expired { order_id } => Body::Expired {
                order_id: order_id.0,
            },
            EventKind::ResidualScheduled(o) => Body::ResidualScheduled(o.into()),
            EventKind::ResidualActivated { order_id } => Body::ResidualActivated {
                order_id: order_id.0,
            },
            EventKind::Matched { dispatch, marginal } => Body::Matched {
                dispatch: dispatch.into(),
                marginal: marginal.into(),
            },
            EventKind::MatchFailed { order_id } => Body::MatchFailed {
                order_id: order_id.0,
            },
            EventKind::DurationShortfall { order_id, filled } => Body::DurationShortfall {
                order_id: order_id.0,
                filled: filled.0,
            },
            EventKind::Finished => Body::Finished,
        };
        Record {
            index: e.index,
            time: e.time.0,
            body,
        }
    }
}

impl Record {
    /// Converts back to an engine event; `line` is only used in errors.
    pub fn to_event(&self, line: usize) -> Result<Event, LogError> {
        let kind = match &self.body {
            Body::Started(c) => EventKind::Started(c.to_config(line)?),
            Body::Submitted { order, batch } => EventKind::Submitted {
                order: order.to_order(line)?,
                batch: *batch,
            },
            Body::Rejected {
                request,
                reason,
                batch,
            } => EventKind::Rejected {
                request: request.into(),
                reason: reason.to_reason(OrderId(request.order_id)),
                batch: *batch,
            },
            Body::CancelRequested { order_id } => EventKind::CancelRequested {
                order_id: OrderId(*order_id),
            },
            Body::Canceled { order_id, reason } => EventKind::Canceled {
                order_id: OrderId(*order_id),
                reason: match reason {
                    CancelRecord::Requested => CancelReason::Requested,
                    CancelRecord::MarketRemainder => CancelReason::MarketRemainder,
                },
            },
            Body::Expired { order_id } => EventKind::Expired {
                order_id: OrderId(*order_id),
            },
            Body::ResidualScheduled(o) => EventKind::ResidualScheduled(o.to_order(line)?),
            Body::ResidualActivated { order_id } => EventKind::ResidualActivated {
                order_id: OrderId(*order_id),
            },
            Body::Matched { dispatch, marginal } => EventKind::Matched {
                dispatch: dispatch.into(),
                marginal: marginal.into(),
            },
            Body::MatchFailed { order_id } => EventKind::MatchFailed {
                order_id: OrderId(*order_id),
            },
            Body::DurationShortfall { order_id, filled } => EventKind::DurationShortfall {
                order_id: OrderId(*order_id),
                filled: Duration(*filled),
            },
            Body::Finished => EventKind::Finished,
        };
        Ok(Event {
            index: self.index,
            time: Time(self.time),
            kind,
        })
    }
}

/// Writes one line per event.
pub fn write_events<W: Write>(mut out: W, events: &[Event]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, &Record::from(e))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl(events: &[Event]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_events(&mut buf, events).expect("writing to memory");
    buf
}

/// A parsed log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub events: Vec<Event>,
    /// The last line was cut short (no newline and not valid JSON) and was
    /// dropped.
    pub torn_tail: bool,
}

/// Reads a log. A torn final line, as left by an interrupted writer, is
/// dropped and flagged; any other malformed line is an error.
pub fn read_events<R: BufRead>(input: R) -> Result<EventLog, LogError> {
    let mut events = Vec::new();
    let mut torn_tail = false;
    let mut lines = input.split(b'\n').peekable();
    let mut n = 0;
    while let Some(raw) = lines.next() {
        n += 1;
        let raw = raw?;
        let last = lines.peek().is_none();
        let text = String::from_utf8_lossy(&raw);
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&text) {
            Ok(r) => events.push(r.to_event(n)?),
            Err(_) if last && serde_json::from_str::<serde_json::Value>(&text).is_err() => {
                torn_tail = true;
            }
            Err(source) => return Err(LogError::Json { line: n, source }),
        }
    }
    Ok(EventLog { events, torn_tail })
}
