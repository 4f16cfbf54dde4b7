//! Discrete-event loop around the book.
//!
//! The engine owns the [`Book`] and a time-ordered queue. Each step pops
//! the earliest item, expires stale orders, processes the item and appends
//! what happened to the event log. At equal times, expirations fire before
//! residual activations, which fire before arrivals and cancels, which come
//! before agent wakes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use thiserror::Error;

use crate::agents::Agent;
use crate::book::Book;
pub use crate::matching::ResidualMode;
use crate::matching::{Marginal, MatchConfig, MatchOutcome, Matcher, RESIDUAL_ID_BASE};
use crate::settlement::{settle, SettlementReport, TariffSchedule};
use crate::types::{
    Dispatch, Duration, MidpointRounding, Order, OrderError, OrderId, OrderKind, OrderRequest,
    Sequencer, TickSize, Time,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EngineConfig {
    pub tick_size: TickSize,
    pub residual_mode: ResidualMode,
    pub rounding: MidpointRounding,
    pub tariff: TariffSchedule,
    /// Queue items later than this are dropped.
    pub stop_time: Option<Time>,
}

impl EngineConfig {
    fn match_config(&self) -> MatchConfig {
        MatchConfig {
            rounding: self.rounding,
            residual_mode: self.residual_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Submit(OrderRequest),
    Cancel(OrderId),
    /// Orders admitted together before a single matching pass, as when
    /// loading an opening book.
    Batch(Vec<OrderRequest>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub time: Time,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CancelReason {
    Requested,
    /// Unfilled part of a market order.
    MarketRemainder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    Invalid(OrderError),
    DuplicateId,
    /// Ids from the residual range are reserved.
    ReservedId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Started(EngineConfig),
    Submitted {
        order: Order,
        batch: Option<u64>,
    },
    Rejected {
        request: OrderRequest,
        reason: RejectReason,
        batch: Option<u64>,
    },
    CancelRequested {
        order_id: OrderId,
    },
    Canceled {
        order_id: OrderId,
        reason: CancelReason,
    },
    Expired {
        order_id: OrderId,
    },
    ResidualScheduled(Order),
    ResidualActivated {
        order_id: OrderId,
    },
    Matched {
        dispatch: Dispatch,
        marginal: Marginal,
    },
    MatchFailed {
        order_id: OrderId,
    },
    /// An inflexible order was served for less than its duration.
    DurationShortfall {
        order_id: OrderId,
        filled: Duration,
    },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub index: u64,
    pub time: Time,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("input at {at} is earlier than the engine clock {now}")]
    TimeRegression { at: u64, now: u64 },
    #[error("agent schedules never end and no stop time is set")]
    Unbounded,
    #[error("engine already finished")]
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Item {
    Expiration,
    Residual(Order),
    Input(Action),
    Wake(usize),
}

impl Item {
    fn class(&self) -> u8 {
        match self {
            Item::Expiration => 0,
            Item::Residual(_) => 1,
            Item::Input(_) => 2,
            Item::Wake(_) => 3,
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub events: Vec<Event>,
    pub dispatches: Vec<Dispatch>,
    /// One report per dispatch.
    pub settlements: Vec<SettlementReport>,
    pub book: Book,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    book: Book,
    matcher: Matcher,
    seq: Sequencer,
    queue: BTreeMap<(Time, u8, u64), Item>,
    queued: u64,
    events: Vec<Event>,
    seen: BTreeSet<OrderId>,
    agents: Vec<Agent>,
    batches: u64,
    now: Time,
    finished: bool,
    dispatches: Vec<Dispatch>,
    settlements: Vec<SettlementReport>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        let mut e = Engine {
            config,
            book: Book::new(),
            matcher: Matcher::new(config.match_config()),
            seq: Sequencer::new(),
            queue: BTreeMap::new(),
            queued: 0,
            events: Vec::new(),
            seen: BTreeSet::new(),
            agents: Vec::new(),
            batches: 0,
            now: Time(0),
            finished: false,
            dispatches: Vec::new(),
            settlements: Vec::new(),
        };
        e.emit(EventKind::Started(config));
        e
    }

    /// Engine driven by scheduled agents as well as explicit inputs.
    pub fn with_agents(config: EngineConfig, agents: Vec<Agent>) -> Result<Self, EngineError> {
        if config.stop_time.is_none() && agents.iter().any(|a| !a.spec().schedule.is_bounded()) {
            return Err(EngineError::Unbounded);
        }
        let mut e = Engine::new(config);
        for (k, a) in agents.iter().enumerate() {
            if let Some(t) = a.first_wake() {
                e.enqueue(t, Item::Wake(k));
            }
        }
        e.agents = agents;
        Ok(e)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn book(&self) -> &Book {
        &self.book
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn push_input(&mut self, input: Input) -> Result<(), EngineError> {
        if self.finished {
            return Err(EngineError::Finished);
        }
        if input.time < self.now {
            return Err(EngineError::TimeRegression {
                at: input.time.0,
                now: self.now.0,
            });
        }
        self.enqueue(input.time, Item::Input(input.action));
        Ok(())
    }

    pub fn push_inputs(
        &mut self,
        inputs: impl IntoIterator<Item = Input>,
    ) -> Result<(), EngineError> {
        inputs.into_iter().try_for_each(|i| self.push_input(i))
    }

    fn enqueue(&mut self, time: Time, item: Item) {
        let key = (time, item.class(), self.queued);
        self.queued += 1;
        self.queue.insert(key, item);
    }

    fn emit(&mut self, kind: EventKind) {
        let index = self.events.len() as u64;
        self.events.push(Event {
            index,
            time: self.now,
            kind,
        });
    }

    /// Time of the next queued item, if any survives the stop time.
    pub fn next_time(&self) -> Option<Time> {
        let (&(t, _, _), _) = self.queue.first_key_value()?;
        match self.config.stop_time {
            Some(stop) if t > stop => None,
            _ => Some(t),
        }
    }

    /// Processes one queued item. Returns false once nothing is left.
    pub fn step(&mut self) -> bool {
        if self.finished || self.next_time().is_none() {
            return false;
        }
        let ((time, _, _), item) = self.queue.pop_first().expect("checked above");
        self.now = time;
        let expired = self.book.expire_due(time);
        for &id in &expired {
            self.emit(EventKind::Expired { order_id: id });
        }
        if let Some(&last) = expired.last() {
            self.resume(last);
        }
        match item {
            Item::Expiration => {}
            Item::Residual(order) => {
                let id = order.order_id;
                self.emit(EventKind::ResidualActivated { order_id: id });
                let out = self
                    .matcher
                    .process_order(&mut self.book, order, time)
                    .expect("residual ids are fresh");
                self.absorb(out, id);
            }
            Item::Input(Action::Submit(req)) => {
                if let Some(order) = self.admit(&req, None) {
                    let id = order.order_id;
                    let out = self
                        .matcher
                        .process_order(&mut self.book, order, time)
                        .expect("admission checked the id");
                    self.absorb(out, id);
                }
            }
            Item::Input(Action::Batch(reqs)) => {
                let batch = self.batches;
                self.batches += 1;
                let orders: Vec<Order> = reqs
                    .iter()
                    .filter_map(|r| self.admit(r, Some(batch)))
                    .collect();
                if let Some(trigger) = orders.last().map(|o| o.order_id) {
                    let out = self
                        .matcher
                        .process_batch(&mut self.book, orders, time)
                        .expect("admission checked the ids");
                    self.absorb(out, trigger);
                }
            }
            Item::Input(Action::Cancel(id)) => {
                self.emit(EventKind::CancelRequested { order_id: id });
                if self.book.cancel(id).is_ok() {
                    self.emit(EventKind::Canceled {
                        order_id: id,
                        reason: CancelReason::Requested,
                    });
                    self.resume(id);
                }
            }
            Item::Wake(k) => {
                let reqs = self.agents[k].emit_orders(time, &self.book);
                for r in reqs {
                    self.enqueue(time, Item::Input(Action::Submit(r)));
                }
                if let Some(next) = self.agents[k].next_wake(time) {
                    self.enqueue(next, Item::Wake(k));
                }
            }
        }
        debug_assert!(self.book.is_equilibrium());
        true
    }

    fn resume(&mut self, trigger: OrderId) {
        let out = self.matcher.resume(&mut self.book, trigger, self.now);
        self.absorb(out, trigger);
    }

    fn admit(&mut self, req: &OrderRequest, batch: Option<u64>) -> Option<Order> {
        let reject = |reason| EventKind::Rejected {
            request: req.clone(),
            reason,
            batch,
        };
        if req.order_id.0 >= RESIDUAL_ID_BASE {
            self.emit(reject(RejectReason::ReservedId));
            return None;
        }
        if self.seen.contains(&req.order_id) {
            self.emit(reject(RejectReason::DuplicateId));
            return None;
        }
        match crate::types::make_order(req, self.now, &mut self.seq) {
            Ok(order) => {
                self.seen.insert(order.order_id);
                self.emit(EventKind::Submitted {
                    order: order.clone(),
                    batch,
                });
                Some(order)
            }
            Err(e) => {
                self.emit(reject(RejectReason::Invalid(e)));
                None
            }
        }
    }

    fn absorb(&mut self, out: MatchOutcome, trigger: OrderId) {
        for ((dispatch, participants), marginal) in out
            .dispatches
            .into_iter()
            .zip(out.participants)
            .zip(out.marginals)
        {
            let report = settle(&dispatch, &participants, &self.config.tariff)
                .expect("participants cover the dispatch");
            self.settlements.push(report);
            self.dispatches.push(dispatch.clone());
            self.emit(EventKind::Matched { dispatch, marginal });
        }
        for id in out.canceled {
            self.emit(EventKind::Canceled {
                order_id: id,
                reason: CancelReason::MarketRemainder,
            });
        }
        for (id, filled) in out.shortfalls {
            self.emit(EventKind::DurationShortfall {
                order_id: id,
                filled,
            });
        }
        for r in out.residuals {
            self.seen.insert(r.order_id);
            self.enqueue(r.activation(), Item::Residual(r.clone()));
            if let Some(d) = r.deadline() {
                self.enqueue(d + Duration(1), Item::Expiration);
            }
            self.emit(EventKind::ResidualScheduled(r));
        }
        for id in out.rested {
            if let Some(d) = self.book.get(id).and_then(Order::deadline) {
                self.enqueue(d + Duration(1), Item::Expiration);
            }
        }
        if out.failed {
            self.emit(EventKind::MatchFailed { order_id: trigger });
        }
    }

    /// Processes every item due at or before `t`.
    pub fn run_until(&mut self, t: Time) {
        while self.next_time().is_some_and(|n| n <= t) {
            self.step();
        }
    }

    /// Drains the queue and closes the log.
    pub fn finish(mut self) -> RunOutput {
        while self.step() {}
        self.queue.clear();
        self.finished = true;
        self.emit(EventKind::Finished);
        RunOutput {
            events: self.events,
            dispatches: self.dispatches,
            settlements: self.settlements,
            book: self.book,
        }
    }
}

/// Runs a fixed input stream to completion.
pub fn run(
    config: EngineConfig,
    inputs: impl IntoIterator<Item = Input>,
) -> Result<RunOutput, EngineError> {
    let mut e = Engine::new(config);
    e.push_inputs(inputs)?;
    Ok(e.finish())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayVerdict {
    Verified,
    /// First index at which the log and the re-run differ.
    Diverged {
        index: u64,
    },
    /// The log ends without a `Finished` record; the prefix matched.
    Truncated {
        verified: u64,
    },
}

fn request_of(order: &Order) -> OrderRequest {
    let (market, price, expiration) = match order.kind {
        OrderKind::Limit {
            limit_price,
            expiration,
        } => (false, Some(limit_price), expiration.map(|d| d.0)),
        OrderKind::Market => (true, None, None),
    };
    OrderRequest {
        order_id: order.order_id,
        device_id: order.device_id,
        timestamp: Some(order.timestamp),
        quantity: order.signed_quantity() as i64,
        market,
        price,
        flexible: order.flexible,
        duration: order.duration.0 as i64,
        expiration,
    }
}

/// Recovers the input stream recorded in a log.
pub fn inputs_of(events: &[Event]) -> Vec<Input> {
    let mut out: Vec<Input> = Vec::new();
    let mut open_batch: Option<u64> = None;
    for e in events {
        let (req, batch) = match &e.kind {
            EventKind::Submitted { order, batch } => (request_of(order), *batch),
            EventKind::Rejected { request, batch, .. } => (request.clone(), *batch),
            EventKind::CancelRequested { order_id } => {
                open_batch = None;
                out.push(Input {
                    time: e.time,
                    action: Action::Cancel(*order_id),
                });
                continue;
            }
            _ => continue,
        };
        match batch {
            Some(b) if open_batch == Some(b) => {
                if let Some(Input {
                    action: Action::Batch(v),
                    ..
                }) = out.last_mut()
                {
                    v.push(req);
                }
            }
            Some(b) => {
                open_batch = Some(b);
                out.push(Input {
                    time: e.time,
                    action: Action::Batch(alloc::vec![req]),
                });
            }
            None => {
                open_batch = None;
                out.push(Input {
                    time: e.time,
                    action: Action::Submit(req),
                });
            }
        }
    }
    out
}

/// Re-executes the inputs recorded in `events` and compares the result
/// record by record.
pub fn replay(events: &[Event]) -> ReplayVerdict {
    let Some(Event {
        kind: EventKind::Started(config),
        ..
    }) = events.first()
    else {
        return ReplayVerdict::Diverged { index: 0 };
    };
    let rerun = match run(*config, inputs_of(events)) {
        Ok(out) => out.events,
        Err(_) => return ReplayVerdict::Diverged { index: 0 },
    };
    let complete = matches!(events.last().map(|e| &e.kind), Some(EventKind::Finished));
    for (k, (a, b)) in events.iter().zip(&rerun).enumerate() {
        if a != b {
            return ReplayVerdict::Diverged { index: k as u64 };
        }
    }
    if !complete {
        return ReplayVerdict::Truncated {
            verified: events.len() as u64,
        };
    }
    if events.len() != rerun.len() {
        return ReplayVerdict::Diverged {
            index: events.len().min(rerun.len()) as u64,
        };
    }
    ReplayVerdict::Verified
}
