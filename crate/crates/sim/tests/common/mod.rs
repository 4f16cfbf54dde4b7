#![allow(dead_code)]

use std::path::PathBuf;

use lob_core::engine::{Action, Input};
use lob_core::types::{DeviceId, OrderId, OrderRequest, Price, Time};
use proptest::prelude::*;

pub fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

/// Random submissions and cancels on a ten-level grid.
pub fn stream() -> impl Strategy<Value = Vec<Input>> {
    let step = (
        0u64..6,
        0u8..8,
        any::<bool>(),
        1i64..5,
        prop::option::of(0i64..10),
        any::<bool>(),
        1i64..20,
        prop::option::of(1u64..30),
    );
    prop::collection::vec(step, 0..30).prop_map(|steps| {
        let mut t = 0;
        let mut id = 0;
        steps
            .into_iter()
            .map(|(gap, kind, buy, q, price, flexible, duration, exp)| {
                t += gap;
                let action = if kind == 0 && id > 0 {
                    Action::Cancel(OrderId(1 + (q as u64 * 7) % id))
                } else {
                    id += 1;
                    Action::Submit(OrderRequest {
                        order_id: OrderId(id),
                        device_id: DeviceId(id % 5),
                        timestamp: None,
                        quantity: if buy { q } else { -q },
                        market: price.is_none(),
                        price: price.map(|p| Price(p * 10)),
                        flexible,
                        duration,
                        expiration: price.and(exp),
                    })
                };
                Input {
                    time: Time(t),
                    action,
                }
            })
            .collect()
    })
}
