//! Schedule-driven device agents.
//!
//! Agents are open-loop stubs: each wakes on a fixed schedule, looks at the
//! top of the book if its archetype cares, and emits order requests. They
//! carry no device physics.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::book::Book;
use crate::engine::{Action, Input};
use crate::types::{
    DeviceId, Duration, LimitRank, OrderId, OrderRequest, Price, Quantity, Side, Time,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    Hvac,
    WaterHeater,
    /// Uncontrolled EV charger.
    EvV0g,
    /// EV charger with controllable charging rate.
    EvV1g,
    /// EV charger that can also discharge.
    EvV2g,
    Pv {
        curtailable: bool,
    },
    Battery,
    /// Pseudo market maker quoting wholesale bids and locational asks.
    Feeder,
}

impl Archetype {
    /// Whether the device accepts partial fulfilment of its power.
    pub fn flexible(self) -> bool {
        match self {
            Archetype::Hvac | Archetype::WaterHeater | Archetype::EvV0g => false,
            Archetype::Pv { curtailable } => curtailable,
            Archetype::EvV1g | Archetype::EvV2g | Archetype::Battery | Archetype::Feeder => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeederParams {
    /// Bid price.
    pub wholesale: Price,
    /// Ask price; must not be below the bid.
    pub lmp: Price,
    pub depth: Quantity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    /// Loads buy at this price.
    Reservation(Price),
    /// Generators sell at this price.
    Floor(Price),
    /// Storage buys at `low` and sells at `high`.
    Band {
        low: Price,
        high: Price,
    },
    Feeder(FeederParams),
}

/// Wakes at `start`, then every `interval`, `count` times in total
/// (unbounded when `None`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub start: Time,
    pub interval: Duration,
    pub count: Option<u32>,
}

impl Schedule {
    pub fn once(at: Time) -> Self {
        Schedule {
            start: at,
            interval: Duration(0),
            count: Some(1),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.count.is_some() || self.interval.0 == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub device_id: DeviceId,
    pub archetype: Archetype,
    pub quantity: Quantity,
    pub duration: Duration,
    /// Lifetime of each limit order; feeders use the refresh interval.
    pub expiration: Option<Duration>,
    pub pricing: Pricing,
    pub schedule: Schedule,
    pub seed: u64,
    /// Order ids are `id_base`, `id_base + 1`, ...
    pub id_base: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("device {0}: pricing does not fit the archetype")]
    PricingMismatch(DeviceId),
    #[error("device {0}: feeder ask is below its bid")]
    SelfCrossing(DeviceId),
    #[error("device {0}: price band is inverted")]
    InvertedBand(DeviceId),
    #[error("device {0}: quantity and duration must be positive")]
    Degenerate(DeviceId),
    #[error("device {0}: feeder needs a positive refresh interval")]
    NoRefresh(DeviceId),
}

#[derive(Debug, Clone)]
pub struct Agent {
    spec: AgentSpec,
    rng: ChaCha8Rng,
    emitted: u64,
    wakes: u32,
}

impl Agent {
    pub fn new(spec: AgentSpec) -> Result<Self, AgentError> {
        let id = spec.device_id;
        let fits = matches!(
            (spec.archetype, spec.pricing),
            (
                Archetype::Hvac | Archetype::WaterHeater | Archetype::EvV0g | Archetype::EvV1g,
                Pricing::Reservation(_)
            ) | (Archetype::Pv { .. }, Pricing::Floor(_))
                | (Archetype::Battery | Archetype::EvV2g, Pricing::Band { .. })
                | (Archetype::Feeder, Pricing::Feeder(_))
        );
        if !fits {
            return Err(AgentError::PricingMismatch(id));
        }
        match spec.pricing {
            Pricing::Feeder(f) if f.lmp < f.wholesale => return Err(AgentError::SelfCrossing(id)),
            Pricing::Feeder(f) if f.depth.0 == 0 => return Err(AgentError::Degenerate(id)),
            Pricing::Feeder(_) if spec.schedule.interval.0 == 0 => {
                return Err(AgentError::NoRefresh(id))
            }
            Pricing::Band { low, high } if low > high => return Err(AgentError::InvertedBand(id)),
            _ => {}
        }
        let needs_quantity = !matches!(spec.pricing, Pricing::Feeder(_));
        if (needs_quantity && spec.quantity.0 == 0) || spec.duration.0 == 0 {
            return Err(AgentError::Degenerate(id));
        }
        Ok(Agent {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
            emitted: 0,
            wakes: 0,
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn first_wake(&self) -> Option<Time> {
        (self.spec.schedule.count != Some(0)).then_some(self.spec.schedule.start)
    }

    /// Next wake after one at `now`, if the schedule continues.
    pub fn next_wake(&self, now: Time) -> Option<Time> {
        let s = &self.spec.schedule;
        if s.interval.0 == 0 || s.count.is_some_and(|c| self.wakes >= c) {
            return None;
        }
        Some(now + s.interval)
    }

    fn request(
        &mut self,
        side: Side,
        quantity: Quantity,
        price: Price,
        expiration: Option<Duration>,
    ) -> OrderRequest {
        let id = OrderId(self.spec.id_base + self.emitted);
        self.emitted += 1;
        let signed = quantity.0 as i64;
        OrderRequest {
            order_id: id,
            device_id: self.spec.device_id,
            timestamp: None,
            quantity: match side {
                Side::Buy => signed,
                Side::Sell => -signed,
            },
            market: false,
            price: Some(price),
            flexible: self.spec.archetype.flexible(),
            duration: self.spec.duration.0 as i64,
            expiration: expiration.map(|d| d.0),
        }
    }

    /// Orders for a wake at `now`. Deterministic in the seed, the wake
    /// count and the top of `book`.
    pub fn emit_orders(&mut self, _now: Time, book: &Book) -> Vec<OrderRequest> {
        self.wakes += 1;
        let q = self.spec.quantity;
        let exp = self.spec.expiration;
        match self.spec.pricing {
            Pricing::Reservation(p) => alloc::vec![self.request(Side::Buy, q, p, exp)],
            Pricing::Floor(p) => alloc::vec![self.request(Side::Sell, q, p, exp)],
            Pricing::Band { low, high } => {
                let cheap = book
                    .best(Side::Sell)
                    .is_some_and(|a| LimitRank::Limit(low).crosses(a.rank()));
                let dear = book
                    .best(Side::Buy)
                    .is_some_and(|b| b.rank().crosses(LimitRank::Limit(high)));
                let buy = match (cheap, dear) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => self.rng.random_bool(0.5),
                };
                if buy {
                    alloc::vec![self.request(Side::Buy, q, low, exp)]
                } else {
                    alloc::vec![self.request(Side::Sell, q, high, exp)]
                }
            }
            Pricing::Feeder(f) => {
                let refresh = Some(self.spec.schedule.interval);
                alloc::vec![
                    self.request(Side::Buy, f.depth, f.wholesale, refresh),
                    self.request(Side::Sell, f.depth, f.lmp, refresh),
                ]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquilibriumError {
    #[error("demand and supply curves do not cross")]
    NoCrossing,
}

/// Walrasian price interval of two step curves given as `(limit, units)`
/// points, found by scanning every tick between the extreme limits.
///
/// Returns the lowest and highest prices at which the traded quantity
/// `min(D(p), S(p))` is maximal, and that quantity.
pub fn equilibrium_interval(
    demand: &[(Price, Quantity)],
    supply: &[(Price, Quantity)],
) -> Result<(Price, Price, Quantity), EquilibriumError> {
    let prices = demand.iter().chain(supply).map(|(p, _)| p.0);
    let (Some(lo), Some(hi)) = (prices.clone().min(), prices.max()) else {
        return Err(EquilibriumError::NoCrossing);
    };
    let mut best: Option<(i64, i64, u64)> = None;
    for p in lo..=hi {
        let d: u64 = demand
            .iter()
            .filter(|(b, _)| b.0 >= p)
            .map(|(_, q)| q.0)
            .sum();
        let s: u64 = supply
            .iter()
            .filter(|(a, _)| a.0 <= p)
            .map(|(_, q)| q.0)
            .sum();
        let traded = d.min(s);
        match best {
            Some((_, _, t)) if traded < t => {}
            Some((first, _, t)) if traded == t => best = Some((first, p, t)),
            _ => best = Some((p, p, traded)),
        }
    }
    match best {
        Some((a, b, t)) if t > 0 => Ok((Price(a), Price(b), Quantity(t))),
        _ => Err(EquilibriumError::NoCrossing),
    }
}

/// Midpoint of the Walrasian interval, rounded down to a tick.
pub fn equilibrium_price(
    demand: &[(Price, Quantity)],
    supply: &[(Price, Quantity)],
) -> Result<Price, EquilibriumError> {
    let (lo, hi, _) = equilibrium_interval(demand, supply)?;
    Ok(Price((lo.0 + hi.0).div_euclid(2)))
}

/// Parameters of a repeated market with fixed demand and supply curves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvergenceParams {
    /// `(limit, units)` per buyer.
    pub demand: Vec<(Price, Quantity)>,
    /// `(limit, units)` per seller.
    pub supply: Vec<(Price, Quantity)>,
    /// Every participant re-submits once per period.
    pub periods: u32,
    pub period: Duration,
    /// Delivery duration of every order.
    pub duration: Duration,
    /// Lifetime of every order.
    pub expiration: Duration,
    pub seed: u64,
}

/// Input stream for a repeated sequential market: each period every buyer
/// and seller submits a flexible limit order at its curve point, at a time
/// drawn uniformly within the period (so the arrival order is shuffled).
///
/// Buyer `i` uses device `i + 1`; seller `j` uses device
/// `demand.len() + j + 1`. Order ids count up from 1.
pub fn convergence_scenario(params: &ConvergenceParams) -> Result<Vec<Input>, EquilibriumError> {
    equilibrium_interval(&params.demand, &params.supply)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let nd = params.demand.len() as u64;
    let mut next_id = 1u64;
    let mut out = Vec::new();
    for k in 0..params.periods {
        let base = u64::from(k) * params.period.0;
        let mut period: Vec<Input> = Vec::new();
        let points = params
            .demand
            .iter()
            .enumerate()
            .map(|(i, &(p, q))| (DeviceId(i as u64 + 1), Side::Buy, p, q))
            .chain(
                params
                    .supply
                    .iter()
                    .enumerate()
                    .map(|(j, &(p, q))| (DeviceId(nd + j as u64 + 1), Side::Sell, p, q)),
            );
        for (device, side, price, q) in points {
            let offset = rng.random_range(0..params.period.0.max(1));
            let signed = q.0 as i64;
            period.push(Input {
                time: Time(base + offset),
                action: Action::Submit(OrderRequest {
                    order_id: OrderId(next_id),
                    device_id: device,
                    timestamp: None,
                    quantity: if side == Side::Buy { signed } else { -signed },
                    market: false,
                    price: Some(price),
                    flexible: true,
                    duration: params.duration.0 as i64,
                    expiration: Some(params.expiration.0),
                }),
            });
            next_id += 1;
        }
        // Equal times keep submission order; break them randomly too.
        shuffle(&mut period, &mut rng);
        period.sort_by_key(|i| i.time);
        out.extend(period);
    }
    Ok(out)
}

fn shuffle<T>(v: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}
