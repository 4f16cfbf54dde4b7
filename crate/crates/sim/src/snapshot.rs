//! Book snapshots rebuilt from an event log, and their tabular rendering.
//!
//! The projection reads events without re-running the matcher: orders
//! enter on `submitted` and `residual_activated`, and leave when they
//! trade, are canceled or expire. A submitted order counts from its own
//! timestamp, so orders admitted as one batch show up at the times they
//! were received, before the batch was matched.

use std::collections::BTreeMap;
use std::fmt::Write;

use lob_core::engine::{Event, EventKind};
use lob_core::types::{Order, OrderId, OrderKind, Side, TickSize, Time};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("the log has no start record")]
    NoStart,
    #[error("time {at} is after the end of the log ({end})")]
    BeyondEnd { at: u64, end: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub time: Time,
    pub tick: TickSize,
    /// Best first.
    pub bids: Vec<Order>,
    /// Best first.
    pub asks: Vec<Order>,
}

/// The book as it stood at `at`, after every event up to that time.
pub fn book_at(events: &[Event], at: Time) -> Result<Snapshot, SnapshotError> {
    let Some(Event {
        kind: EventKind::Started(config),
        ..
    }) = events.first()
    else {
        return Err(SnapshotError::NoStart);
    };
    let end = events.last().map_or(Time(0), |e| e.time);
    if at > end {
        return Err(SnapshotError::BeyondEnd {
            at: at.0,
            end: end.0,
        });
    }
    let mut resting: BTreeMap<OrderId, Order> = BTreeMap::new();
    let mut pending: BTreeMap<OrderId, Order> = BTreeMap::new();
    for e in events {
        let effective = match &e.kind {
            EventKind::Submitted { order, .. } => order.timestamp.min(e.time),
            _ => e.time,
        };
        if effective > at {
            continue;
        }
        match &e.kind {
            EventKind::Submitted { order, .. } => {
                resting.insert(order.order_id, order.clone());
            }
            EventKind::ResidualScheduled(order) => {
                pending.insert(order.order_id, order.clone());
            }
            EventKind::ResidualActivated { order_id } => {
                if let Some(o) = pending.remove(order_id) {
                    resting.insert(o.order_id, o);
                }
            }
            EventKind::Matched { dispatch, .. } => {
                for t in &dispatch.transactions {
                    resting.remove(&t.buyer_order);
                    resting.remove(&t.seller_order);
                }
            }
            EventKind::Canceled { order_id, .. } | EventKind::Expired { order_id } => {
                resting.remove(order_id);
            }
            _ => {}
        }
    }
    let side = |s: Side| {
        let mut v: Vec<Order> = resting.values().filter(|o| o.side == s).cloned().collect();
        v.sort_by_key(|o| (o.priority_key(), o.order_id));
        v
    };
    Ok(Snapshot {
        time: at,
        tick: config.tick_size,
        bids: side(Side::Buy),
        asks: side(Side::Sell),
    })
}

const COLUMNS: [&str; 8] = [
    "Device ID",
    "Order ID",
    "Timestamp",
    "Quantity",
    "Price",
    "isPowerFlexible",
    "Duration",
    "Expiration",
];

fn row(o: &Order, tick: &TickSize) -> [String; 8] {
    let (price, expiration) = match o.kind {
        OrderKind::Limit {
            limit_price,
            expiration,
        } => (
            tick.format_price(limit_price),
            expiration.map_or_else(|| "-".to_string(), |d| d.0.to_string()),
        ),
        OrderKind::Market => ("MARKET".to_string(), "-".to_string()),
    };
    [
        o.device_id.to_string(),
        o.order_id.to_string(),
        o.timestamp.0.to_string(),
        o.signed_quantity().to_string(),
        price,
        if o.flexible { "TRUE" } else { "FALSE" }.to_string(),
        o.duration.0.to_string(),
        expiration,
    ]
}

impl Snapshot {
    /// BUY section then SELL section, each best first.
    pub fn render(&self) -> String {
        let bids: Vec<[String; 8]> = self.bids.iter().map(|o| row(o, &self.tick)).collect();
        let asks: Vec<[String; 8]> = self.asks.iter().map(|o| row(o, &self.tick)).collect();
        let mut widths = COLUMNS.map(str::len);
        for r in bids.iter().chain(&asks) {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let total: usize = widths.iter().sum::<usize>() + 3 * widths.len() + 1;
        let rule = format!("+{}+\n", "-".repeat(total - 2));
        let line = |cells: &[String]| {
            let mut s = String::from("|");
            for (c, w) in cells.iter().zip(widths) {
                let _ = write!(s, " {c:>w$} |");
            }
            s.push('\n');
            s
        };
        let banner = |name: &str| format!("|{:^w$}|\n", name, w = total - 2);

        let mut out = format!("Book at t={}\n", self.time.0);
        out.push_str(&rule);
        out.push_str(&line(&COLUMNS.map(String::from)));
        for (name, rows) in [("BUY", &bids), ("SELL", &asks)] {
            out.push_str(&rule);
            out.push_str(&banner(name));
            out.push_str(&rule);
            for r in rows {
                out.push_str(&line(r));
            }
        }
        out.push_str(&rule);
        out
    }
}
