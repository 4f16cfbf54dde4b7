//! Scenario files.
//!
//! A scenario is a TOML document with a `version` field, market settings,
//! and any mix of an opening book, explicit orders, cancels, device agents
//! and a generated convergence market. Order entries use the column names
//! of the tabular book layout with signed quantities:
//!
//! ```toml
//! version = 1
//!
//! [market]
//! epoch = "2022-01-01 00:00:00"
//!
//! [[orders]]
//! "Device ID" = 1
//! "Order ID" = 1
//! "Timestamp" = "2022-01-01 00:00:00"
//! "Quantity" = 2
//! "Price" = "4.00"
//! "isPowerFlexible" = false
//! "Duration" = 10
//! "Expiration" = 10
//! ```
//!
//! Unknown fields are errors everywhere.

use std::path::Path;

use chrono::NaiveDateTime;
use lob_core::agents::{
    convergence_scenario, equilibrium_price, AgentSpec, Archetype, ConvergenceParams, FeederParams,
    Pricing, Schedule,
};
use lob_core::engine::{Action, EngineConfig, Input, ResidualMode};
use lob_core::types::{
    make_order, DeviceId, Duration, MidpointRounding, OrderId, OrderRequest, Price, Quantity,
    Sequencer, TickSize, Time,
};
use lob_core::TariffSchedule;
use serde::Deserialize;
use thiserror::Error;

pub const VERSION: u32 = 1;

/// Agent `i` (zero based) numbers its orders from `(i + 1) * AGENT_ID_STRIDE`.
pub const AGENT_ID_STRIDE: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported version {0} (expected {VERSION})")]
    Version(u32),
    #[error("{at}: {message}")]
    Field { at: String, message: String },
}

fn field(at: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        at: at.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub tariff: TariffSection,
    pub opening_book: Option<OpeningBook>,
    #[serde(default)]
    pub orders: Vec<OrderEntry>,
    #[serde(default)]
    pub cancels: Vec<CancelEntry>,
    #[serde(default)]
    pub agents: Vec<AgentEntry>,
    pub convergence: Option<ConvergenceSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSetting {
    #[default]
    Deferred,
    Immediate,
}

impl From<ResidualSetting> for ResidualMode {
    fn from(s: ResidualSetting) -> Self {
        match s {
            ResidualSetting::Deferred => ResidualMode::Deferred,
            ResidualSetting::Immediate => ResidualMode::Immediate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingSetting {
    #[default]
    TowardBuyer,
    TowardSeller,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    /// Currency amount of one tick, default `"0.01"`.
    pub tick_size: Option<String>,
    #[serde(default)]
    pub residual_mode: ResidualSetting,
    #[serde(default)]
    pub rounding: RoundingSetting,
    /// Origin for datetime timestamps; required if any are used.
    pub epoch: Option<String>,
    pub stop_time: Option<TimeValue>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSection {
    pub per_kwh: Option<PriceValue>,
    pub per_transaction: Option<PriceValue>,
}

/// Seconds since the epoch, or a datetime.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TimeValue {
    Seconds(i64),
    Text(String),
}

/// A currency amount; strings keep exact decimals.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PriceValue {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderTypeSetting {
    Limit,
    Market,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderEntry {
    #[serde(rename = "Device ID")]
    pub device_id: u64,
    #[serde(rename = "Order ID")]
    pub order_id: u64,
    #[serde(rename = "Timestamp")]
    pub timestamp: TimeValue,
    #[serde(rename = "Quantity")]
    pub quantity: i64,
    #[serde(rename = "Price")]
    pub price: Option<PriceValue>,
    #[serde(rename = "isPowerFlexible")]
    pub flexible: bool,
    #[serde(rename = "Duration")]
    pub duration: i64,
    /// Seconds after activation; absent means good till canceled.
    #[serde(rename = "Expiration")]
    pub expiration: Option<u64>,
    /// Defaults to `limit` when a price is given and `market` otherwise.
    #[serde(rename = "Type")]
    pub kind: Option<OrderTypeSetting>,
}

/// Orders admitted together at `time` before one matching pass. Their
/// own timestamps only set priority.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningBook {
    pub time: TimeValue,
    pub orders: Vec<OrderEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CancelEntry {
    #[serde(rename = "Order ID")]
    pub order_id: u64,
    #[serde(rename = "Timestamp")]
    pub timestamp: TimeValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchetypeSetting {
    Hvac,
    WaterHeater,
    EvV0g,
    EvV1g,
    EvV2g,
    Pv,
    PvCurtailable,
    Battery,
    Feeder,
}

impl From<ArchetypeSetting> for Archetype {
    fn from(a: ArchetypeSetting) -> Self {
        match a {
            ArchetypeSetting::Hvac => Archetype::Hvac,
            ArchetypeSetting::WaterHeater => Archetype::WaterHeater,
            ArchetypeSetting::EvV0g => Archetype::EvV0g,
            ArchetypeSetting::EvV1g => Archetype::EvV1g,
            ArchetypeSetting::EvV2g => Archetype::EvV2g,
            ArchetypeSetting::Pv => Archetype::Pv { curtailable: false },
            ArchetypeSetting::PvCurtailable => Archetype::Pv { curtailable: true },
            ArchetypeSetting::Battery => Archetype::Battery,
            ArchetypeSetting::Feeder => Archetype::Feeder,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub device_id: u64,
    pub archetype: ArchetypeSetting,
    #[serde(default)]
    pub quantity: u64,
    pub duration: u64,
    pub expiration: Option<u64>,
    /// Reservation price of loads, floor price of generators.
    pub price: Option<PriceValue>,
    /// Storage buy price.
    pub low: Option<PriceValue>,
    /// Storage sell price.
    pub high: Option<PriceValue>,
    /// Feeder bid.
    pub wholesale: Option<PriceValue>,
    /// Feeder ask.
    pub lmp: Option<PriceValue>,
    /// Feeder quantity on each side.
    pub depth: Option<u64>,
    #[serde(default = "zero_time")]
    pub start: TimeValue,
    #[serde(default)]
    pub interval: u64,
    pub count: Option<u32>,
    /// Defaults to a value derived from the market seed.
    pub seed: Option<u64>,
}

fn zero_time() -> TimeValue {
    TimeValue::Seconds(0)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvePoint {
    pub price: PriceValue,
    pub quantity: u64,
}

/// A repeated market where every curve point re-submits each period.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub demand: Vec<CurvePoint>,
    pub supply: Vec<CurvePoint>,
    pub periods: u32,
    pub period: u64,
    pub duration: u64,
    pub expiration: u64,
    /// First generated order id; defaults to 1.
    pub first_order_id: Option<u64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub residual_mode: Option<ResidualMode>,
    pub tariff_per_kwh: Option<String>,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub config: EngineConfig,
    /// Sorted by time; equal times keep file order.
    pub inputs: Vec<Input>,
    pub agents: Vec<AgentSpec>,
    pub seed: u64,
    /// Curve intersection price of the convergence section, if any.
    pub equilibrium: Option<Price>,
}

impl Scenario {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        file.build(overrides)
    }
}

struct Ctx {
    tick: TickSize,
    epoch: Option<NaiveDateTime>,
}

impl Ctx {
    fn time(&self, v: &TimeValue, at: &str) -> Result<Time, ScenarioError> {
        match v {
            TimeValue::Seconds(s) if *s >= 0 => Ok(Time(*s as u64)),
            TimeValue::Seconds(s) => Err(field(at, format!("time {s} is negative"))),
            TimeValue::Text(s) => {
                let dt = parse_datetime(s)
                    .ok_or_else(|| field(at, format!("`{s}` is not a datetime")))?;
                let epoch = self
                    .epoch
                    .ok_or_else(|| field(at, "datetime timestamps need market.epoch"))?;
                let secs = (dt - epoch).num_seconds();
                if secs < 0 {
                    return Err(field(at, format!("`{s}` is before the epoch")));
                }
                Ok(Time(secs as u64))
            }
        }
    }

    fn price(&self, v: &PriceValue, at: &str) -> Result<Price, ScenarioError> {
        let text = match v {
            PriceValue::Int(i) => i.to_string(),
            PriceValue::Float(f) => f.to_string(),
            PriceValue::Text(s) => s.clone(),
        };
        self.tick
            .parse_price(&text)
            .map_err(|e| field(at, e.to_string()))
    }
}

fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

fn agent_seed(market_seed: u64, k: usize) -> u64 {
    market_seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl ScenarioFile {
    pub fn build(&self, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
        if self.version != VERSION {
            return Err(ScenarioError::Version(self.version));
        }
        let m = &self.market;
        let tick = match &m.tick_size {
            Some(s) => TickSize::parse(s).map_err(|e| field("market.tick_size", e.to_string()))?,
            None => TickSize::default(),
        };
        let epoch = match &m.epoch {
            Some(s) => Some(
                parse_datetime(s)
                    .ok_or_else(|| field("market.epoch", format!("`{s}` is not a datetime")))?,
            ),
            None => None,
        };
        let ctx = Ctx { tick, epoch };
        let seed = overrides.seed.unwrap_or(m.seed);

        let per_kwh = match (&overrides.tariff_per_kwh, &self.tariff.per_kwh) {
            (Some(s), _) => ctx.price(&PriceValue::Text(s.clone()), "--tariff")?,
            (None, Some(v)) => ctx.price(v, "tariff.per_kwh")?,
            (None, None) => Price(0),
        };
        let per_transaction = match &self.tariff.per_transaction {
            Some(v) => ctx.price(v, "tariff.per_transaction")?,
            None => Price(0),
        };
        let config = EngineConfig {
            tick_size: tick,
            residual_mode: overrides.residual_mode.unwrap_or(m.residual_mode.into()),
            rounding: match m.rounding {
                RoundingSetting::TowardBuyer => MidpointRounding::TowardBuyer,
                RoundingSetting::TowardSeller => MidpointRounding::TowardSeller,
            },
            tariff: TariffSchedule {
                per_kwh,
                per_transaction,
            },
            stop_time: m
                .stop_time
                .as_ref()
                .map(|t| ctx.time(t, "market.stop_time"))
                .transpose()?,
        };

        let mut inputs = Vec::new();
        let mut ids = IdClaims {
            seen: Default::default(),
            agents: !self.agents.is_empty(),
        };
        if let Some(ob) = &self.opening_book {
            let time = ctx.time(&ob.time, "opening_book.time")?;
            let mut reqs = Vec::new();
            for (k, e) in ob.orders.iter().enumerate() {
                let at = format!("opening_book.orders[{k}]");
                let (req, ts) = e.request(&ctx, &at)?;
                if ts > time {
                    return Err(field(at, "Timestamp is after opening_book.time"));
                }
                claim(&mut ids, req.order_id, &at)?;
                reqs.push(OrderRequest {
                    timestamp: Some(ts),
                    ..req
                });
            }
            inputs.push(Input {
                time,
                action: Action::Batch(reqs),
            });
        }
        for (k, e) in self.orders.iter().enumerate() {
            let at = format!("orders[{k}]");
            let (req, ts) = e.request(&ctx, &at)?;
            claim(&mut ids, req.order_id, &at)?;
            inputs.push(Input {
                time: ts,
                action: Action::Submit(req),
            });
        }
        for (k, c) in self.cancels.iter().enumerate() {
            let at = format!("cancels[{k}]");
            inputs.push(Input {
                time: ctx.time(&c.timestamp, &at)?,
                action: Action::Cancel(OrderId(c.order_id)),
            });
        }

        let mut equilibrium = None;
        if let Some(cv) = &self.convergence {
            let curve =
                |pts: &[CurvePoint], name: &str| -> Result<Vec<(Price, Quantity)>, ScenarioError> {
                    pts.iter()
                        .enumerate()
                        .map(|(k, p)| {
                            let at = format!("convergence.{name}[{k}]");
                            if p.quantity == 0 {
                                return Err(field(at, "quantity must be positive"));
                            }
                            Ok((ctx.price(&p.price, &at)?, Quantity(p.quantity)))
                        })
                        .collect()
                };
            if cv.period == 0 || cv.duration == 0 || cv.expiration == 0 {
                return Err(field(
                    "convergence",
                    "period, duration and expiration must be positive",
                ));
            }
            let params = ConvergenceParams {
                demand: curve(&cv.demand, "demand")?,
                supply: curve(&cv.supply, "supply")?,
                periods: cv.periods,
                period: Duration(cv.period),
                duration: Duration(cv.duration),
                expiration: Duration(cv.expiration),
                seed,
            };
            equilibrium = Some(
                equilibrium_price(&params.demand, &params.supply)
                    .map_err(|e| field("convergence", e.to_string()))?,
            );
            let shift = cv
                .first_order_id
                .unwrap_or(1)
                .checked_sub(1)
                .ok_or_else(|| field("convergence.first_order_id", "must be positive"))?;
            let generated =
                convergence_scenario(&params).map_err(|e| field("convergence", e.to_string()))?;
            for mut input in generated {
                if let Action::Submit(r) = &mut input.action {
                    r.order_id = OrderId(r.order_id.0 + shift);
                    claim(&mut ids, r.order_id, "convergence")?;
                }
                inputs.push(input);
            }
        }
        // Stable: equal times keep the order above.
        inputs.sort_by_key(|i| i.time);

        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(k, a)| a.spec(&ctx, k, seed))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, a) in agents.iter().enumerate() {
            lob_core::agents::Agent::new(a.clone())
                .map_err(|e| field(format!("agents[{k}]"), e.to_string()))?;
        }
        if config.stop_time.is_none() && agents.iter().any(|a| !a.schedule.is_bounded()) {
            return Err(field(
                "market.stop_time",
                "required when an agent has no `count`",
            ));
        }

        Ok(Scenario {
            config,
            inputs,
            agents,
            seed,
            equilibrium,
        })
    }
}

struct IdClaims {
    seen: std::collections::BTreeSet<u64>,
    /// Agent order ids start at `AGENT_ID_STRIDE`.
    agents: bool,
}

fn claim(ids: &mut IdClaims, id: OrderId, at: &str) -> Result<(), ScenarioError> {
    if ids.agents && id.0 >= AGENT_ID_STRIDE {
        return Err(field(
            at,
            format!("Order ID {id} is in the range reserved for agents"),
        ));
    }
    if !ids.seen.insert(id.0) {
        return Err(field(at, format!("Order ID {id} is used twice")));
    }
    Ok(())
}

impl OrderEntry {
    /// The request and its timestamp. Checks the entry the same way the
    /// engine would, so bad entries fail at load time.
    fn request(&self, ctx: &Ctx, at: &str) -> Result<(OrderRequest, Time), ScenarioError> {
        let at = format!("{at} (Order ID {})", self.order_id);
        let ts = ctx.time(&self.timestamp, &format!("{at}.Timestamp"))?;
        let market = match self.kind {
            Some(OrderTypeSetting::Market) => true,
            Some(OrderTypeSetting::Limit) => false,
            None => self.price.is_none(),
        };
        let price = self
            .price
            .as_ref()
            .map(|p| ctx.price(p, &format!("{at}.Price")))
            .transpose()?;
        let req = OrderRequest {
            order_id: OrderId(self.order_id),
            device_id: DeviceId(self.device_id),
            timestamp: None,
            quantity: self.quantity,
            market,
            price,
            flexible: self.flexible,
            duration: self.duration,
            expiration: self.expiration,
        };
        make_order(&req, ts, &mut Sequencer::new()).map_err(|e| {
            let name = match e {
                lob_core::OrderError::ZeroQuantity(_) => "Quantity",
                lob_core::OrderError::NonPositiveDuration(_) => "Duration",
                lob_core::OrderError::MarketWithPrice(_)
                | lob_core::OrderError::LimitWithoutPrice(_) => "Price",
                lob_core::OrderError::MarketWithExpiration(_)
                | lob_core::OrderError::ZeroExpiration(_) => "Expiration",
            };
            field(format!("{at}.{name}"), e.to_string())
        })?;
        Ok((req, ts))
    }
}

impl AgentEntry {
    fn spec(&self, ctx: &Ctx, k: usize, market_seed: u64) -> Result<AgentSpec, ScenarioError> {
        let at = format!("agents[{k}]");
        let need = |v: &Option<PriceValue>, name: &str| -> Result<Price, ScenarioError> {
            let v = v
                .as_ref()
                .ok_or_else(|| field(&at, format!("{:?} agents need `{name}`", self.archetype)))?;
            ctx.price(v, &format!("{at}.{name}"))
        };
        let archetype: Archetype = self.archetype.into();
        let pricing = match self.archetype {
            ArchetypeSetting::Hvac
            | ArchetypeSetting::WaterHeater
            | ArchetypeSetting::EvV0g
            | ArchetypeSetting::EvV1g => Pricing::Reservation(need(&self.price, "price")?),
            ArchetypeSetting::Pv | ArchetypeSetting::PvCurtailable => {
                Pricing::Floor(need(&self.price, "price")?)
            }
            ArchetypeSetting::Battery | ArchetypeSetting::EvV2g => Pricing::Band {
                low: need(&self.low, "low")?,
                high: need(&self.high, "high")?,
            },
            ArchetypeSetting::Feeder => Pricing::Feeder(FeederParams {
                wholesale: need(&self.wholesale, "wholesale")?,
                lmp: need(&self.lmp, "lmp")?,
                depth: Quantity(
                    self.depth
                        .ok_or_else(|| field(&at, "feeder agents need `depth`"))?,
                ),
            }),
        };
        Ok(AgentSpec {
            device_id: DeviceId(self.device_id),
            archetype,
            quantity: Quantity(self.quantity),
            duration: Duration(self.duration),
            expiration: self.expiration.map(Duration),
            pricing,
            schedule: Schedule {
                start: ctx.time(&self.start, &format!("{at}.start"))?,
                interval: Duration(self.interval),
                count: self.count,
            },
            seed: self.seed.unwrap_or_else(|| agent_seed(market_seed, k)),
            id_base: (k as u64 + 1) * AGENT_ID_STRIDE,
        })
    }
}
