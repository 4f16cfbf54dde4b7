//! CSV outputs. Column orders are fixed:
//!
//! - `dispatches.csv`: round_id, transaction, seller_device, buyer_device,
//!   quantity, price, duration, seller_order, buyer_order, start_time
//! - `settlement.csv`: round_id, device_id, role, quantity, duration,
//!   clearing_price, tariff, payment, surplus
//! - `prices.csv`: time, round_id, clearing_price
//!
//! Prices are decimals on the tick grid. Money columns are rounded to the
//! nearest tick, half away from zero. `transaction` counts from 1 within a
//! round. `surplus` is empty for market orders.

use std::io::{self, Write};

use lob_core::engine::{Event, EventKind};
use lob_core::settlement::{Role, SettlementReport};
use lob_core::types::{Dispatch, TickSize};

pub const DISPATCH_HEADER: [&str; 10] = [
    "round_id",
    "transaction",
    "seller_device",
    "buyer_device",
    "quantity",
    "price",
    "duration",
    "seller_order",
    "buyer_order",
    "start_time",
];

pub const SETTLEMENT_HEADER: [&str; 9] = [
    "round_id",
    "device_id",
    "role",
    "quantity",
    "duration",
    "clearing_price",
    "tariff",
    "payment",
    "surplus",
];

pub const PRICE_HEADER: [&str; 3] = ["time", "round_id", "clearing_price"];

fn writer<W: Write>(out: W, header: &[&str]) -> io::Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

fn matched(events: &[Event]) -> impl Iterator<Item = (&Event, &Dispatch)> {
    events.iter().filter_map(|e| match &e.kind {
        EventKind::Matched { dispatch, .. } => Some((e, dispatch)),
        _ => None,
    })
}

pub fn write_dispatches<W: Write>(out: W, events: &[Event], tick: &TickSize) -> io::Result<()> {
    let mut w = writer(out, &DISPATCH_HEADER)?;
    for (_, d) in matched(events) {
        for (k, t) in d.transactions.iter().enumerate() {
            w.write_record([
                d.round_id.to_string(),
                (k + 1).to_string(),
                t.seller_device.to_string(),
                t.buyer_device.to_string(),
                t.quantity.0.to_string(),
                tick.format_price(t.clearing_price),
                t.duration.0.to_string(),
                t.seller_order.to_string(),
                t.buyer_order.to_string(),
                t.start_time.0.to_string(),
            ])?;
        }
    }
    w.flush()
}

pub fn write_prices<W: Write>(out: W, events: &[Event], tick: &TickSize) -> io::Result<()> {
    let mut w = writer(out, &PRICE_HEADER)?;
    for (e, d) in matched(events) {
        w.write_record([
            e.time.0.to_string(),
            d.round_id.to_string(),
            tick.format_price(d.clearing_price),
        ])?;
    }
    w.flush()
}

pub fn write_settlements<W: Write>(
    out: W,
    reports: &[SettlementReport],
    tick: &TickSize,
) -> io::Result<()> {
    let mut w = writer(out, &SETTLEMENT_HEADER)?;
    for line in reports.iter().flat_map(|r| &r.lines) {
        w.write_record([
            line.round_id.to_string(),
            line.device_id.to_string(),
            match line.role {
                Role::Buyer => "buyer".to_string(),
                Role::Seller => "seller".to_string(),
            },
            line.quantity.0.to_string(),
            line.duration.0.to_string(),
            tick.format_price(line.clearing_price),
            tick.format_money(line.tariff),
            tick.format_money(line.amount),
            line.surplus
                .map(|s| tick.format_money(s))
                .unwrap_or_default(),
        ])?;
    }
    w.flush()
}
