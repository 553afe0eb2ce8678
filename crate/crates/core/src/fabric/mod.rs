//! Deterministic simulator of a 2D grid of processing elements (PEs).
//!
//! Every PE owns a router with four neighbor links and a ramp to the PE
//! itself. Packets are 32-bit words tagged with a [`Color`]; each router
//! holds, per color, a two-position [`RouterConfig`]. Packets arriving at the
//! ramp run the handler registered for their color.
//!
//! Time advances in ticks. In tick `t` the engine first lets every router, in
//! row-major PE order, accept the packets whose link traversal completes at
//! `t` (inputs in N, E, S, W order), then runs handlers in row-major order:
//! activations due at `t` first, then ramp deliveries. Each directed link
//! carries one packet per tick. Everything a handler asks for (sends,
//! activations, switch changes, barrier arrivals) is applied in request
//! order when it returns; sends enter the PE's own router immediately and
//! reach the next router at `t + 1` at the earliest, activations run at
//! `t + 1`.

mod log;
mod router;

pub use log::{Detail, Event, EventKind, EventLog, LogLevel, ParseEventError};
pub use router::{Color, Link, LinkSet, Route, RouterConfig, COLOR_COUNT};

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use router::RouterState;

/// Local memory per PE unless configured otherwise.
pub const DEFAULT_MEMORY_BUDGET: usize = 48 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FabricError {
    #[error("fabric dimensions must be positive, got {width}x{height}")]
    EmptyDims { width: usize, height: usize },
    #[error("color id {0} is out of range")]
    BadColor(u8),
    #[error("PE {0} is outside the fabric")]
    NoSuchPe(PeCoord),
    #[error("PE {pe} already has a different route for color {color}")]
    RouteConflict { pe: PeCoord, color: Color },
    #[error("PE {pe} has no route for color {color}")]
    Unrouted { pe: PeCoord, color: Color },
    #[error(
        "PE {pe} sent on color {color} but the current position does not receive from the ramp"
    )]
    NoRampRoute { pe: PeCoord, color: Color },
    #[error("PE {pe} already has a handler for color {color}")]
    DuplicateHandler { pe: PeCoord, color: Color },
    #[error("PE {pe} received color {color} but has no handler for it")]
    NoHandler { pe: PeCoord, color: Color },
    #[error("PE {pe} arrived twice at barrier {id}")]
    BarrierReentry { pe: PeCoord, id: u32 },
    #[error("PE {pe} would use {needed} bytes, over its {budget}-byte budget")]
    OverBudget {
        pe: PeCoord,
        needed: usize,
        budget: usize,
    },
    #[error("deadlock at tick {tick}: {}", DeadlockList(.waiting))]
    Deadlock { tick: u64, waiting: Vec<Waiter> },
    #[error("run exceeded {0} ticks")]
    TickLimit(u64),
    /// Raised by program handlers.
    #[error("PE {pe}: {message}")]
    Program { pe: PeCoord, message: String },
}

/// Something left unresolved when a run went quiet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Waiter {
    /// PE still expecting `remaining` packets of `color`.
    Packets {
        pe: PeCoord,
        color: Color,
        remaining: u32,
    },
    /// Barrier with only `arrived` of the PEs present.
    Barrier { id: u32, arrived: usize },
}

struct DeadlockList<'a>(&'a [Waiter]);

impl fmt::Display for DeadlockList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match w {
                Waiter::Packets {
                    pe,
                    color,
                    remaining,
                } => write!(
                    f,
                    "PE {pe} waits for {remaining} packet(s) of color {color}"
                )?,
                Waiter::Barrier { id, arrived } => {
                    write!(f, "barrier {id} has {arrived} arrival(s)")?
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FabricDims {
    pub width: usize,
    pub height: usize,
}

impl FabricDims {
    pub fn new(width: usize, height: usize) -> Result<Self, FabricError> {
        if width == 0 || height == 0 {
            return Err(FabricError::EmptyDims { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn pe_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, pe: PeCoord) -> bool {
        pe.x < self.width && pe.y < self.height
    }

    /// Row-major PE index.
    pub fn index(&self, pe: PeCoord) -> usize {
        pe.x + self.width * pe.y
    }

    pub fn coord(&self, index: usize) -> PeCoord {
        PeCoord {
            x: index % self.width,
            y: index / self.width,
        }
    }

    /// PE across `link`, if any. The ramp leads back to the PE itself.
    pub fn neighbor(&self, pe: PeCoord, link: Link) -> Option<PeCoord> {
        let n = match link {
            Link::North => PeCoord {
                x: pe.x,
                y: pe.y.checked_sub(1)?,
            },
            Link::South => PeCoord {
                x: pe.x,
                y: pe.y + 1,
            },
            Link::West => PeCoord {
                x: pe.x.checked_sub(1)?,
                y: pe.y,
            },
            Link::East => PeCoord {
                x: pe.x + 1,
                y: pe.y,
            },
            Link::Ramp => pe,
        };
        self.contains(n).then_some(n)
    }

    /// Number of directed inter-PE links.
    pub fn link_count(&self) -> usize {
        2 * ((self.width - 1) * self.height + self.width * (self.height - 1))
    }
}

/// PE position: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PeCoord {
    pub x: usize,
    pub y: usize,
}

impl PeCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for PeCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Payload {
    Data(u32),
    /// Router command: advances the switch of every router it passes
    /// through, after being forwarded.
    Control(u32),
}

impl Payload {
    pub fn is_control(self) -> bool {
        matches!(self, Payload::Control(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Packet {
    pub color: Color,
    pub payload: Payload,
}

/// What a handler is invoked with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Data(u32),
    Control(u32),
    /// Local activation with no payload.
    Activation,
}

pub type Handler<S> = Box<dyn FnMut(&mut S, &mut Ctx, Delivery) -> Result<(), FabricError>>;

enum Command {
    Send(Color, Vec<Payload>),
    Activate(Color),
    Advance(Color),
    Expect(Color, u32),
    Barrier { id: u32, release: Color },
    Mark(u32),
}

/// Handle a handler uses to act on the fabric. Requests are applied in
/// order once the handler returns.
pub struct Ctx {
    pe: PeCoord,
    tick: u64,
    dims: FabricDims,
    cmds: Vec<Command>,
}

impl Ctx {
    pub fn pe(&self) -> PeCoord {
        self.pe
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn dims(&self) -> FabricDims {
        self.dims
    }

    pub fn has_neighbor(&self, link: Link) -> bool {
        self.dims.neighbor(self.pe, link).is_some()
    }

    pub fn send(&mut self, color: Color, payloads: Vec<Payload>) {
        self.cmds.push(Command::Send(color, payloads));
    }

    pub fn send_data(&mut self, color: Color, words: &[u32]) {
        self.send(color, words.iter().map(|&w| Payload::Data(w)).collect());
    }

    pub fn send_control(&mut self, color: Color) {
        self.send(color, vec![Payload::Control(0)]);
    }

    /// Runs this PE's handler for `color` on the next tick.
    pub fn activate(&mut self, color: Color) {
        self.cmds.push(Command::Activate(color));
    }

    pub fn advance_switch(&mut self, color: Color) {
        self.cmds.push(Command::Advance(color));
    }

    /// Declares that `n` packets of `color` must reach this PE, counting any
    /// that already arrived unexpected; outstanding expectations at
    /// quiescence are reported as a deadlock.
    pub fn expect(&mut self, color: Color, n: u32) {
        self.cmds.push(Command::Expect(color, n));
    }

    /// Arrives at fabric-wide barrier `id`. When every PE has arrived,
    /// `release` is activated on all PEs on the following tick.
    pub fn barrier(&mut self, id: u32, release: Color) {
        self.cmds.push(Command::Barrier { id, release });
    }

    /// Logs a program-defined marker.
    pub fn mark(&mut self, code: u32) {
        self.cmds.push(Command::Mark(code));
    }

    pub fn fail(&self, message: impl Into<String>) -> FabricError {
        FabricError::Program {
            pe: self.pe,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeMemory {
    pub pe: PeCoord,
    pub used: usize,
    pub budget: usize,
    pub over_budget: bool,
    pub buffers: Vec<(String, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FabricStats {
    /// Last tick at which anything happened.
    pub ticks: u64,
    pub data_sent: u64,
    pub control_sent: u64,
    /// Packets accepted by a router from a neighbor link.
    pub hops: u64,
    pub deliveries: u64,
    pub tasks: u64,
    pub misroutes: u64,
    pub barriers: u64,
}

struct Pe<S> {
    state: S,
    routers: Vec<(Color, RouterState)>,
    handlers: Vec<(Color, Handler<S>)>,
    /// Outgoing link queues in N, E, S, W order: `(arrival tick, packet)`.
    out: [VecDeque<(u64, Packet)>; 4],
    last_arrival: [u64; 4],
    ramp_in: VecDeque<(u64, Packet)>,
    activations: VecDeque<(u64, Color)>,
    /// Packets still expected per color; early arrivals drive it negative.
    waits: Vec<(Color, i64)>,
    buffers: Vec<(String, usize)>,
}

impl<S> Pe<S> {
    fn router(&mut self, color: Color) -> Option<&mut RouterState> {
        self.routers
            .iter_mut()
            .find(|(c, _)| *c == color)
            .map(|(_, r)| r)
    }

    fn used(&self) -> usize {
        self.buffers.iter().map(|(_, b)| b).sum()
    }

    fn next_tick(&self) -> Option<u64> {
        let links = self.out.iter().filter_map(|q| q.front().map(|e| e.0));
        let ramp = self.ramp_in.front().map(|e| e.0);
        let act = self.activations.front().map(|e| e.0);
        links.chain(ramp).chain(act).min()
    }
}

fn link_slot(l: Link) -> usize {
    match l {
        Link::North => 0,
        Link::East => 1,
        Link::South => 2,
        Link::West => 3,
        Link::Ramp => unreachable!("the ramp has no link queue"),
    }
}

pub struct Fabric<S> {
    dims: FabricDims,
    budget: usize,
    enforce: bool,
    pes: Vec<Pe<S>>,
    shared: Vec<Option<Handler<S>>>,
    barriers: BTreeMap<u32, Vec<bool>>,
    tick: u64,
    max_ticks: u64,
    level: LogLevel,
    log: EventLog,
    stats: FabricStats,
}

impl<S> Fabric<S> {
    pub fn new(
        dims: FabricDims,
        memory_budget: usize,
        enforce_budget: bool,
        mut init: impl FnMut(PeCoord) -> S,
    ) -> Self {
        let pes = (0..dims.pe_count())
            .map(|i| Pe {
                state: init(dims.coord(i)),
                routers: Vec::new(),
                handlers: Vec::new(),
                out: Default::default(),
                last_arrival: [0; 4],
                ramp_in: VecDeque::new(),
                activations: VecDeque::new(),
                waits: Vec::new(),
                buffers: Vec::new(),
            })
            .collect();
        Self {
            dims,
            budget: memory_budget,
            enforce: enforce_budget,
            pes,
            shared: (0..COLOR_COUNT).map(|_| None).collect(),
            barriers: BTreeMap::new(),
            tick: 0,
            max_ticks: 100_000_000,
            level: LogLevel::Full,
            log: EventLog::new(),
            stats: FabricStats::default(),
        }
    }

    pub fn dims(&self) -> FabricDims {
        self.dims
    }

    pub fn set_log_level(&mut self, level: LogLevel) {
        self.level = level;
    }

    pub fn set_max_ticks(&mut self, max: u64) {
        self.max_ticks = max;
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn stats(&self) -> FabricStats {
        self.stats
    }

    fn slot(&self, pe: PeCoord) -> Result<usize, FabricError> {
        if self.dims.contains(pe) {
            Ok(self.dims.index(pe))
        } else {
            Err(FabricError::NoSuchPe(pe))
        }
    }

    pub fn state(&self, pe: PeCoord) -> &S {
        &self.pes[self.dims.index(pe)].state
    }

    pub fn state_mut(&mut self, pe: PeCoord) -> &mut S {
        let i = self.dims.index(pe);
        &mut self.pes[i].state
    }

    /// PE states in row-major order.
    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.pes.iter().map(|p| &p.state)
    }

    /// Installs the route for `color` at position 0. Installing an identical
    /// table again is a no-op.
    pub fn set_router_config(
        &mut self,
        pe: PeCoord,
        color: Color,
        config: RouterConfig,
    ) -> Result<(), FabricError> {
        let i = self.slot(pe)?;
        match self.pes[i].router(color) {
            Some(r) if r.config == config => Ok(()),
            Some(_) => Err(FabricError::RouteConflict { pe, color }),
            None => {
                self.pes[i].routers.push((color, RouterState::new(config)));
                Ok(())
            }
        }
    }

    pub fn router_position(&self, pe: PeCoord, color: Color) -> Option<u8> {
        let p = &self.pes[self.dims.index(pe)];
        p.routers
            .iter()
            .find(|(c, _)| *c == color)
            .map(|(_, r)| r.current)
    }

    pub fn advance_switch(&mut self, pe: PeCoord, color: Color) -> Result<(), FabricError> {
        let i = self.slot(pe)?;
        self.pes[i]
            .router(color)
            .ok_or(FabricError::Unrouted { pe, color })?
            .advance();
        Ok(())
    }

    /// Registers a handler for `color` on one PE.
    pub fn on_color(
        &mut self,
        pe: PeCoord,
        color: Color,
        handler: Handler<S>,
    ) -> Result<(), FabricError> {
        let i = self.slot(pe)?;
        if self.shared[color.id() as usize].is_some()
            || self.pes[i].handlers.iter().any(|(c, _)| *c == color)
        {
            return Err(FabricError::DuplicateHandler { pe, color });
        }
        self.pes[i].handlers.push((color, handler));
        Ok(())
    }

    /// Registers one handler for `color` shared by every PE.
    pub fn on_color_all(&mut self, color: Color, handler: Handler<S>) -> Result<(), FabricError> {
        let taken = self
            .pes
            .iter()
            .position(|p| p.handlers.iter().any(|(c, _)| *c == color));
        if self.shared[color.id() as usize].is_some() || taken.is_some() {
            let pe = self.dims.coord(taken.unwrap_or(0));
            return Err(FabricError::DuplicateHandler { pe, color });
        }
        self.shared[color.id() as usize] = Some(handler);
        Ok(())
    }

    /// Schedules `color` to run on `pe` at the current tick.
    pub fn activate(&mut self, pe: PeCoord, color: Color) -> Result<(), FabricError> {
        let i = self.slot(pe)?;
        self.pes[i].activations.push_back((self.tick, color));
        Ok(())
    }

    pub fn activate_all(&mut self, color: Color) {
        let t = self.tick;
        for p in &mut self.pes {
            p.activations.push_back((t, color));
        }
    }

    /// Records a named buffer in a PE's memory ledger.
    pub fn alloc(
        &mut self,
        pe: PeCoord,
        name: impl Into<String>,
        bytes: usize,
    ) -> Result<(), FabricError> {
        let i = self.slot(pe)?;
        let needed = self.pes[i].used() + bytes;
        if self.enforce && needed > self.budget {
            return Err(FabricError::OverBudget {
                pe,
                needed,
                budget: self.budget,
            });
        }
        self.pes[i].buffers.push((name.into(), bytes));
        Ok(())
    }

    pub fn memory_report(&self) -> Vec<PeMemory> {
        self.pes
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let used = p.used();
                PeMemory {
                    pe: self.dims.coord(i),
                    used,
                    budget: self.budget,
                    over_budget: used > self.budget,
                    buffers: p.buffers.clone(),
                }
            })
            .collect()
    }

    fn emit(
        &mut self,
        full_only: bool,
        pe: PeCoord,
        kind: EventKind,
        color: Option<Color>,
        detail: Detail,
    ) {
        let on = match self.level {
            LogLevel::Full => true,
            LogLevel::Protocol => !full_only,
            LogLevel::Off => false,
        };
        if on {
            self.log.push(Event {
                tick: self.tick,
                pe,
                kind,
                color,
                detail,
            });
        }
    }

    /// Puts a packet on the link leaving PE `i` through `link`.
    fn transmit(&mut self, i: usize, link: Link, packet: Packet) {
        let pe = self.dims.coord(i);
        if self.dims.neighbor(pe, link).is_none() {
            self.stats.misroutes += 1;
            self.emit(
                false,
                pe,
                EventKind::Misroute,
                Some(packet.color),
                Detail::Stray(link),
            );
            return;
        }
        let s = link_slot(link);
        let p = &mut self.pes[i];
        let arrival = (self.tick + 1).max(p.last_arrival[s] + 1);
        p.last_arrival[s] = arrival;
        p.out[s].push_back((arrival, packet));
    }

    /// Runs `packet` through PE `i`'s router, having entered on `from`.
    fn route(&mut self, i: usize, from: Link, packet: Packet) {
        let pe = self.dims.coord(i);
        let color = packet.color;
        let Some(route) = self.pes[i].router(color).map(|r| r.route()) else {
            self.stats.misroutes += 1;
            self.emit(
                false,
                pe,
                EventKind::Misroute,
                Some(color),
                Detail::Stray(from),
            );
            return;
        };
        if !route.rx.contains(from) {
            self.stats.misroutes += 1;
            self.emit(
                false,
                pe,
                EventKind::Misroute,
                Some(color),
                Detail::Stray(from),
            );
            return;
        }
        for link in route.tx.iter() {
            if link == Link::Ramp {
                let due = if from == Link::Ramp {
                    self.tick + 1
                } else {
                    self.tick
                };
                self.pes[i].ramp_in.push_back((due, packet));
            } else {
                self.transmit(i, link, packet);
            }
        }
        if packet.payload.is_control() {
            let r = self.pes[i].router(color).expect("checked above");
            r.advance();
            let pos = r.current;
            self.emit(
                true,
                pe,
                EventKind::Switch,
                Some(color),
                Detail::Position(pos),
            );
        }
    }

    fn router_phase(&mut self) {
        let t = self.tick;
        for i in 0..self.pes.len() {
            let pe = self.dims.coord(i);
            for link in Link::CARDINAL {
                let Some(n) = self.dims.neighbor(pe, link) else {
                    continue;
                };
                let j = self.dims.index(n);
                let s = link_slot(link.opposite());
                while self.pes[j].out[s].front().is_some_and(|e| e.0 <= t) {
                    let (_, packet) = self.pes[j].out[s].pop_front().expect("front checked");
                    self.stats.hops += 1;
                    let control = packet.payload.is_control();
                    self.emit(
                        true,
                        pe,
                        EventKind::Hop,
                        Some(packet.color),
                        Detail::In { link, control },
                    );
                    self.route(i, link, packet);
                }
            }
        }
    }

    fn handler_phase(&mut self) -> Result<(), FabricError> {
        let t = self.tick;
        for i in 0..self.pes.len() {
            while self.pes[i].activations.front().is_some_and(|e| e.0 <= t) {
                let (_, color) = self.pes[i].activations.pop_front().expect("front checked");
                self.emit(
                    true,
                    self.dims.coord(i),
                    EventKind::Task,
                    Some(color),
                    Detail::None,
                );
                self.invoke(i, color, Delivery::Activation)?;
            }
            while self.pes[i].ramp_in.front().is_some_and(|e| e.0 <= t) {
                let (_, packet) = self.pes[i].ramp_in.pop_front().expect("front checked");
                let (delivery, detail) = match packet.payload {
                    Payload::Data(w) => (Delivery::Data(w), Detail::Data(w)),
                    Payload::Control(w) => (Delivery::Control(w), Detail::Control(w)),
                };
                self.stats.deliveries += 1;
                self.emit(
                    true,
                    self.dims.coord(i),
                    EventKind::Deliver,
                    Some(packet.color),
                    detail,
                );
                let waits = &mut self.pes[i].waits;
                match waits.iter_mut().find(|(c, _)| *c == packet.color) {
                    Some((_, n)) => *n -= 1,
                    None => waits.push((packet.color, -1)),
                }
                self.invoke(i, packet.color, delivery)?;
            }
        }
        Ok(())
    }

    fn invoke(&mut self, i: usize, color: Color, delivery: Delivery) -> Result<(), FabricError> {
        let pe = self.dims.coord(i);
        let mut ctx = Ctx {
            pe,
            tick: self.tick,
            dims: self.dims,
            cmds: Vec::new(),
        };
        self.stats.tasks += 1;
        let local = self.pes[i].handlers.iter().position(|(c, _)| *c == color);
        if let Some(k) = local {
            let p = &mut self.pes[i];
            (p.handlers[k].1)(&mut p.state, &mut ctx, delivery)?;
        } else {
            let slot = color.id() as usize;
            let mut h = self.shared[slot]
                .take()
                .ok_or(FabricError::NoHandler { pe, color })?;
            let res = h(&mut self.pes[i].state, &mut ctx, delivery);
            self.shared[slot] = Some(h);
            res?;
        }
        for cmd in ctx.cmds {
            self.apply(i, cmd)?;
        }
        Ok(())
    }

    fn apply(&mut self, i: usize, cmd: Command) -> Result<(), FabricError> {
        let pe = self.dims.coord(i);
        match cmd {
            Command::Send(color, payloads) => {
                let route = self.pes[i]
                    .router(color)
                    .ok_or(FabricError::Unrouted { pe, color })?
                    .route();
                if !route.rx.contains(Link::Ramp) {
                    return Err(FabricError::NoRampRoute { pe, color });
                }
                let control = payloads.iter().filter(|p| p.is_control()).count() as u32;
                let data = payloads.len() as u32 - control;
                self.stats.data_sent += u64::from(data);
                self.stats.control_sent += u64::from(control);
                self.emit(
                    false,
                    pe,
                    EventKind::Send,
                    Some(color),
                    Detail::Words { data, control },
                );
                for payload in payloads {
                    // A preceding control packet may have moved the switch.
                    let route = self.pes[i].router(color).expect("checked above").route();
                    if !route.rx.contains(Link::Ramp) {
                        return Err(FabricError::NoRampRoute { pe, color });
                    }
                    self.route(i, Link::Ramp, Packet { color, payload });
                }
            }
            Command::Activate(color) => {
                self.emit(true, pe, EventKind::Activate, Some(color), Detail::None);
                let t = self.tick + 1;
                self.pes[i].activations.push_back((t, color));
            }
            Command::Advance(color) => {
                let r = self.pes[i]
                    .router(color)
                    .ok_or(FabricError::Unrouted { pe, color })?;
                r.advance();
                let pos = r.current;
                self.emit(
                    true,
                    pe,
                    EventKind::Switch,
                    Some(color),
                    Detail::Position(pos),
                );
            }
            Command::Expect(color, n) => {
                let waits = &mut self.pes[i].waits;
                match waits.iter_mut().find(|(c, _)| *c == color) {
                    Some((_, m)) => *m += i64::from(n),
                    None => waits.push((color, i64::from(n))),
                }
            }
            Command::Barrier { id, release } => {
                let n = self.pes.len();
                let arrived = self.barriers.entry(id).or_insert_with(|| vec![false; n]);
                if core::mem::replace(&mut arrived[i], true) {
                    return Err(FabricError::BarrierReentry { pe, id });
                }
                if arrived.iter().all(|&a| a) {
                    self.barriers.remove(&id);
                    self.stats.barriers += 1;
                    self.emit(
                        false,
                        PeCoord::new(0, 0),
                        EventKind::Barrier,
                        Some(release),
                        Detail::Barrier(id),
                    );
                    let t = self.tick + 1;
                    for p in &mut self.pes {
                        p.activations.push_back((t, release));
                    }
                }
            }
            Command::Mark(code) => self.emit(false, pe, EventKind::Mark, None, Detail::Mark(code)),
        }
        Ok(())
    }

    /// Runs until nothing is in flight and nothing is scheduled, returning
    /// the events logged during this call.
    pub fn run(&mut self) -> Result<EventLog, FabricError> {
        let start = self.tick;
        loop {
            if self.tick - start > self.max_ticks {
                return Err(FabricError::TickLimit(self.max_ticks));
            }
            self.router_phase();
            self.handler_phase()?;
            self.stats.ticks = self.tick;
            match self.pes.iter().filter_map(Pe::next_tick).min() {
                Some(next) => self.tick = next.max(self.tick + 1),
                None => break,
            }
        }
        let mut waiting = Vec::new();
        for (i, p) in self.pes.iter().enumerate() {
            for &(color, remaining) in &p.waits {
                if remaining > 0 {
                    let remaining = u32::try_from(remaining).unwrap_or(u32::MAX);
                    waiting.push(Waiter::Packets {
                        pe: self.dims.coord(i),
                        color,
                        remaining,
                    });
                }
            }
        }
        for (&id, arrived) in &self.barriers {
            waiting.push(Waiter::Barrier {
                id,
                arrived: arrived.iter().filter(|&&a| a).count(),
            });
        }
        if !waiting.is_empty() {
            return Err(FabricError::Deadlock {
                tick: self.tick,
                waiting,
            });
        }
        Ok(core::mem::take(&mut self.log))
    }
}
