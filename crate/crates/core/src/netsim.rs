//! Discrete-event model of a two-node link.
//!
//! Alice holds an EPR source and sends Bob's half of each pair through a
//! lossy depolarizing fiber. Both nodes store their halves in quantum memory
//! and talk over a classical channel with propagation delay. Pair states are
//! tracked as exact density matrices, so the ground-truth fidelity of every
//! stored pair is always known.
//!
//! Rates in Hz become per-event probabilities through `p = 1 − exp(−rate·t)`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::{Decision, PairSource};
use crate::quantum::{bell_state_phi_plus, depolarize_one_qubit, DensityMatrix, Party};

/// Generation attempts allowed per session before the loss settings are
/// treated as broken.
pub const ATTEMPT_CAP: u64 = 1_000_000_000;

/// Link parameters. Distances in km, rates in Hz, speeds in km/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub distance_km: f64,
    pub channel_depolar_rate_hz: f64,
    pub fiber_speed_km_per_s: f64,
    pub attenuation_length_km: f64,
    pub memory_depolar_rate_hz: f64,
    pub attempt_rate_hz: f64,
    pub classical_speed_km_per_s: f64,
    /// Qubit slots per node.
    pub memory_capacity: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            distance_km: 1.0,
            channel_depolar_rate_hz: 8000.0,
            fiber_speed_km_per_s: 2e5,
            attenuation_length_km: 20.0,
            memory_depolar_rate_hz: 0.0,
            attempt_rate_hz: 1e6,
            classical_speed_km_per_s: 2e5,
            memory_capacity: 10_000,
        }
    }
}

fn decay_probability(rate_hz: f64, dt: f64) -> f64 {
    if rate_hz == 0.0 || dt == 0.0 {
        0.0
    } else {
        -(-rate_hz * dt).exp_m1()
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.distance_km > 0.0) || !self.distance_km.is_finite() {
            return bad(format!("distance_km must be positive, got {}", self.distance_km));
        }
        for (name, v) in [
            ("channel_depolar_rate_hz", self.channel_depolar_rate_hz),
            ("memory_depolar_rate_hz", self.memory_depolar_rate_hz),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite rate >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("fiber_speed_km_per_s", self.fiber_speed_km_per_s),
            ("classical_speed_km_per_s", self.classical_speed_km_per_s),
            ("attempt_rate_hz", self.attempt_rate_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.attenuation_length_km > 0.0) {
            return bad(format!(
                "attenuation_length_km must be positive, got {}",
                self.attenuation_length_km
            ));
        }
        if self.memory_capacity == 0 {
            return bad("memory_capacity must be at least 1".into());
        }
        Ok(())
    }

    /// Fiber transit time of Bob's qubit, seconds.
    pub fn transit_time(&self) -> f64 {
        self.distance_km / self.fiber_speed_km_per_s
    }

    pub fn loss_probability(&self) -> f64 {
        -(-self.distance_km / self.attenuation_length_km).exp_m1()
    }

    /// Depolarizing probability accumulated by the flying qubit.
    pub fn channel_depolar_probability(&self) -> f64 {
        decay_probability(self.channel_depolar_rate_hz, self.transit_time())
    }

    pub fn memory_depolar_probability(&self, dt: f64) -> f64 {
        decay_probability(self.memory_depolar_rate_hz, dt)
    }

    pub fn classical_delay(&self) -> f64 {
        self.distance_km / self.classical_speed_km_per_s
    }

    /// Closed-form fidelity of a freshly delivered pair when memory noise
    /// is off: `1 − (3/4)·p`.
    pub fn delivered_fidelity(&self) -> f64 {
        1.0 - 0.75 * self.channel_depolar_probability()
    }
}

/// Handle returned when scheduling an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventId(pub u64);

#[derive(Debug)]
struct Scheduled<E> {
    time: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

/// Simulated clock with a future-event queue ordered by `(time, sequence)`.
/// Same-time events fire in insertion order.
#[derive(Debug)]
pub struct SimClock<E> {
    now: f64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Scheduled<E>>>,
}

impl<E> Default for SimClock<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> SimClock<E> {
    pub fn new() -> Self {
        Self {
            now: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn schedule_at(&mut self, time: f64, event: E) -> Result<EventId> {
        if !(time >= self.now) {
            return Err(Error::TimeRegression {
                now: self.now,
                target: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, event }));
        Ok(EventId(seq))
    }

    pub fn schedule_in(&mut self, delay: f64, event: E) -> Result<EventId> {
        self.schedule_at(self.now + delay, event)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|Reverse(s)| s.time)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(f64, EventId, E)> {
        let Reverse(s) = self.queue.pop()?;
        debug_assert!(s.time >= self.now, "event queue went back in time");
        self.now = s.time;
        Some((s.time, EventId(s.seq), s.event))
    }

    /// Moves the clock forward without executing anything. Fails if an
    /// event is pending before `time`.
    pub fn advance_to(&mut self, time: f64) -> Result<()> {
        if time < self.now || self.peek_time().is_some_and(|t| t < time) {
            return Err(Error::TimeRegression {
                now: self.now,
                target: time,
            });
        }
        self.now = time;
        Ok(())
    }
}

/// An entangled pair held in both memories.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPair {
    pub pair_id: u64,
    pub state: DensityMatrix,
    /// Time both halves were in memory.
    pub created_at: f64,
    /// Time up to which memory decoherence has been applied.
    pub updated_at: f64,
    pub alice_slot: usize,
    pub bob_slot: usize,
}

/// Applies memory depolarization to both halves for the time elapsed since
/// the pair was last updated.
pub fn apply_memory_decoherence(pair: &StoredPair, until: f64, config: &NetworkConfig) -> Result<StoredPair> {
    if until < pair.updated_at {
        return Err(Error::TimeRegression {
            now: pair.updated_at,
            target: until,
        });
    }
    let p = config.memory_depolar_probability(until - pair.updated_at);
    let mut out = pair.clone();
    if p > 0.0 {
        let alice = depolarize_one_qubit(&pair.state, Party::Alice, p)?;
        out.state = depolarize_one_qubit(&alice, Party::Bob, p)?;
    }
    out.updated_at = until;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// Announces the measurement schedule: `n_per_setting` pairs per setting.
    BasisChoices { n_per_setting: u64 },
    Outcomes { count: u64 },
    Verdict { decision: Decision },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalMessage {
    pub from: Party,
    pub payload: Payload,
    pub sent_at: f64,
    pub deliver_at: f64,
}

impl ClassicalMessage {
    pub fn new(from: Party, payload: Payload, sent_at: f64, config: &NetworkConfig) -> Self {
        Self {
            from,
            payload,
            sent_at,
            deliver_at: sent_at + config.classical_delay(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryEvent {
    pub event: EventId,
    pub deliver_at: f64,
}

/// Events on the link.
#[derive(Debug, Clone, PartialEq)]
pub enum NetEvent {
    Attempt,
    Arrival { pair_id: u64, emitted_at: f64 },
    Delivery(ClassicalMessage),
}

/// Schedules delivery of `msg` at its `deliver_at`.
pub fn exchange_message(msg: ClassicalMessage, clock: &mut SimClock<NetEvent>) -> Result<DeliveryEvent> {
    let deliver_at = msg.deliver_at;
    let event = clock.schedule_at(deliver_at, NetEvent::Delivery(msg))?;
    Ok(DeliveryEvent { event, deliver_at })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Attempt { lost: bool },
    Arrival { pair_id: u64 },
    Delivery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: f64,
    pub event: EventId,
    pub kind: TraceKind,
}

/// Keeps track of stored pairs and which memory slots they occupy.
#[derive(Debug, Clone)]
pub struct EntanglementHandler {
    capacity: usize,
    free_alice: BTreeSet<usize>,
    free_bob: BTreeSet<usize>,
    live: VecDeque<StoredPair>,
}

impl EntanglementHandler {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            free_alice: (0..capacity).collect(),
            free_bob: (0..capacity).collect(),
            live: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn free_slots(&self) -> usize {
        self.free_alice.len().min(self.free_bob.len())
    }

    fn store(&mut self, pair_id: u64, state: DensityMatrix, now: f64) -> Result<&StoredPair> {
        let (Some(a), Some(b)) = (self.free_alice.pop_first(), self.free_bob.pop_first()) else {
            return Err(Error::MemoryCapacity {
                capacity: self.capacity,
            });
        };
        self.live.push_back(StoredPair {
            pair_id,
            state,
            created_at: now,
            updated_at: now,
            alice_slot: a,
            bob_slot: b,
        });
        Ok(self.live.back().expect("just pushed"))
    }

    /// Removes the oldest stored pair and frees its slots.
    pub fn take_oldest(&mut self) -> Option<StoredPair> {
        let pair = self.live.pop_front()?;
        self.free_alice.insert(pair.alice_slot);
        self.free_bob.insert(pair.bob_slot);
        Some(pair)
    }

    pub fn pairs(&self) -> impl Iterator<Item = &StoredPair> {
        self.live.iter()
    }
}

/// A running two-node link: clock, memories, classical inbox and noise RNG.
#[derive(Debug)]
pub struct Network {
    config: NetworkConfig,
    clock: SimClock<NetEvent>,
    rng: ChaCha8Rng,
    handler: EntanglementHandler,
    next_pair_id: u64,
    next_attempt_at: f64,
    attempts: u64,
    inbox: Vec<ClassicalMessage>,
    trace: Option<Vec<TraceEntry>>,
    attempt_cap: u64,
}

impl Network {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            clock: SimClock::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            handler: EntanglementHandler::new(config.memory_capacity),
            next_pair_id: 0,
            next_attempt_at: 0.0,
            attempts: 0,
            inbox: Vec::new(),
            trace: None,
            attempt_cap: ATTEMPT_CAP,
        })
    }

    /// Records every executed event.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn with_attempt_cap(mut self, cap: u64) -> Self {
        self.attempt_cap = cap;
        self
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn clock(&self) -> &SimClock<NetEvent> {
        &self.clock
    }

    pub fn handler(&self) -> &EntanglementHandler {
        &self.handler
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn inbox(&self) -> &[ClassicalMessage] {
        &self.inbox
    }

    fn record(&mut self, time: f64, event: EventId, kind: TraceKind) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry { time, event, kind });
        }
    }

    /// Runs generation until `count` more pairs are stored in memory and
    /// returns copies of them in creation order.
    pub fn generate_pairs(&mut self, count: usize) -> Result<Vec<StoredPair>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        if self.handler.free_slots() < count {
            return Err(Error::MemoryCapacity {
                capacity: self.handler.capacity(),
            });
        }
        let transit = self.config.transit_time();
        let p_loss = self.config.loss_probability();
        let p_channel = self.config.channel_depolar_probability();
        let p_transit_memory = self.config.memory_depolar_probability(transit);
        let attempt_period = 1.0 / self.config.attempt_rate_hz;

        let mut delivered = Vec::with_capacity(count);
        let mut in_flight = 0usize;
        let mut session_attempts = 0u64;
        let first = self.next_attempt_at.max(self.clock.now());
        self.clock.schedule_at(first, NetEvent::Attempt)?;

        while delivered.len() < count {
            let Some((time, id, event)) = self.clock.pop() else {
                unreachable!("generation session ran out of events");
            };
            match event {
                NetEvent::Attempt => {
                    session_attempts += 1;
                    self.attempts += 1;
                    if session_attempts > self.attempt_cap {
                        return Err(Error::AttemptCap(self.attempt_cap));
                    }
                    let lost = p_loss > 0.0 && self.rng.random::<f64>() < p_loss;
                    self.record(time, id, TraceKind::Attempt { lost });
                    if !lost {
                        in_flight += 1;
                        let pair_id = self.next_pair_id;
                        self.next_pair_id += 1;
                        self.clock.schedule_at(time + transit, NetEvent::Arrival { pair_id, emitted_at: time })?;
                    }
                    self.next_attempt_at = time + attempt_period;
                    if delivered.len() + in_flight < count {
                        self.clock.schedule_at(self.next_attempt_at, NetEvent::Attempt)?;
                    }
                }
                NetEvent::Arrival { pair_id, .. } => {
                    in_flight -= 1;
                    self.record(time, id, TraceKind::Arrival { pair_id });
                    let state = depolarize_one_qubit(&bell_state_phi_plus(), Party::Bob, p_channel)?;
                    // Alice's half sat in memory while Bob's was in the fiber.
                    let state = depolarize_one_qubit(&state, Party::Alice, p_transit_memory)?;
                    let pair = self.handler.store(pair_id, state, time)?;
                    delivered.push(pair.clone());
                }
                NetEvent::Delivery(msg) => {
                    self.record(time, id, TraceKind::Delivery);
                    self.inbox.push(msg);
                }
            }
        }
        Ok(delivered)
    }

    /// Sends a classical message now; it lands in the inbox on delivery.
    pub fn send(&mut self, from: Party, payload: Payload) -> Result<DeliveryEvent> {
        let msg = ClassicalMessage::new(from, payload, self.clock.now(), &self.config);
        exchange_message(msg, &mut self.clock)
    }

    /// Executes every pending event. Only deliveries can be pending outside
    /// a generation session.
    pub fn run_until_idle(&mut self) {
        while let Some((time, id, event)) = self.clock.pop() {
            match event {
                NetEvent::Delivery(msg) => {
                    self.record(time, id, TraceKind::Delivery);
                    self.inbox.push(msg);
                }
                other => unreachable!("{other:?} pending outside a generation session"),
            }
        }
    }

    /// Removes the oldest stored pair after bringing its memory noise up to
    /// the current time.
    pub fn take_pair(&mut self) -> Result<Option<StoredPair>> {
        let now = self.clock.now();
        match self.handler.take_oldest() {
            Some(pair) => apply_memory_decoherence(&pair, now, &self.config).map(Some),
            None => Ok(None),
        }
    }

    /// Empties memory, returning every stored pair decohered up to now.
    pub fn drain_pairs(&mut self) -> Result<Vec<StoredPair>> {
        let mut out = Vec::with_capacity(self.handler.len());
        while let Some(pair) = self.take_pair()? {
            out.push(pair);
        }
        Ok(out)
    }
}

/// [`PairSource`] over a [`Network`]. Pairs are handed out oldest first;
/// when memory is empty a new pair is generated on demand.
#[derive(Debug)]
pub struct NetworkPairSource {
    network: Network,
    consumed: u64,
}

impl NetworkPairSource {
    pub fn new(network: Network) -> Self {
        Self { network, consumed: 0 }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn into_network(self) -> Network {
        self.network
    }
}

/// Builds a network-backed pair source seeded with `seed`.
pub fn network_pair_source(config: NetworkConfig, seed: u64) -> Result<NetworkPairSource> {
    Ok(NetworkPairSource::new(Network::new(config, seed)?))
}

impl PairSource for NetworkPairSource {
    fn next_pair(&mut self) -> Result<DensityMatrix> {
        if self.network.handler().is_empty() {
            self.network.generate_pairs(1)?;
        }
        let pair = self.network.take_pair()?.expect("memory holds at least one pair");
        self.consumed += 1;
        Ok(pair.state)
    }

    fn consumed(&self) -> u64 {
        self.consumed
    }
}
