use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    C1, C10, C11, C12, C2, C3, C4, C5, C6, C7, C8, C9, COMPLETION_COLORS, DATA_COLORS,
    EXCHANGE_STEP,
};
use crate::fabric::{
    Color, Ctx, Delivery, EventLog, Fabric, FabricDims, FabricError, Link, Payload, PeCoord, Route,
    RouterConfig, DEFAULT_MEMORY_BUDGET,
};

/// Which PEs an action applies to: odd or even index along X or Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParityClass {
    OddX,
    EvenX,
    OddY,
    EvenY,
}

impl ParityClass {
    pub fn contains(self, pe: PeCoord) -> bool {
        match self {
            ParityClass::OddX => pe.x % 2 == 1,
            ParityClass::EvenX => pe.x.is_multiple_of(2),
            ParityClass::OddY => pe.y % 2 == 1,
            ParityClass::EvenY => pe.y.is_multiple_of(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Send,
    Receive,
}

/// One cell of the schedule. `dir` is where data goes for a send and where
/// it comes from (and which buffer it fills) for a receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub class: ParityClass,
    pub role: Role,
    pub dir: Link,
    pub color: Color,
    pub completion: Color,
}

const fn act(class: ParityClass, role: Role, dir: Link, color: Color, completion: Color) -> Action {
    Action {
        class,
        role,
        dir,
        color,
        completion,
    }
}

use Link::{East as E, North as N, South as S, West as W};
use ParityClass::{EvenX, EvenY, OddX, OddY};
use Role::{Receive as Recv, Send};

/// Four steps of four concurrent actions, columns ordered odd-X, even-X,
/// odd-Y, even-Y.
pub const SCHEDULE: [[Action; 4]; 4] = [
    [
        act(OddX, Send, E, C1, C5),
        act(EvenX, Recv, W, C1, C6),
        act(OddY, Send, N, C3, C7),
        act(EvenY, Recv, S, C3, C8),
    ],
    [
        act(OddX, Recv, W, C2, C6),
        act(EvenX, Send, E, C2, C5),
        act(OddY, Recv, S, C4, C8),
        act(EvenY, Send, N, C4, C7),
    ],
    [
        act(OddX, Send, W, C1, C9),
        act(EvenX, Recv, E, C1, C10),
        act(OddY, Send, S, C3, C11),
        act(EvenY, Recv, N, C3, C12),
    ],
    [
        act(OddX, Recv, E, C2, C10),
        act(EvenX, Send, W, C2, C9),
        act(OddY, Recv, N, C4, C12),
        act(EvenY, Send, S, C4, C11),
    ],
];

/// The two actions (X class first, then Y class) a PE performs in `step`.
fn actions_of(pe: PeCoord, step: usize) -> impl Iterator<Item = &'static Action> {
    SCHEDULE[step].iter().filter(move |a| a.class.contains(pe))
}

/// Actions of `pe` on `color` in step order; there are always two.
fn actions_on(pe: PeCoord, color: Color) -> impl Iterator<Item = &'static Action> {
    (0..4)
        .flat_map(move |s| actions_of(pe, s))
        .filter(move |a| a.color == color)
}

/// Router tables for the four data colors on `pe`, read off the schedule:
/// a PE's first action on a color is switch position 0, its second is
/// position 1, and ring mode brings it back for the next exchange.
pub fn router_configs(pe: PeCoord) -> [(Color, RouterConfig); 4] {
    DATA_COLORS.map(|color| {
        let mut routes = actions_on(pe, color).map(|a| match a.role {
            Role::Send => Route::new(Link::Ramp, a.dir),
            Role::Receive => Route::new(a.dir, Link::Ramp),
        });
        let pos0 = routes.next().expect("two actions per color");
        let pos1 = routes.next().expect("two actions per color");
        (color, RouterConfig::new(pos0, pos1, true))
    })
}

/// Neighbor columns received by one PE; `None` on fabric edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborBuffers {
    pub north: Option<Vec<f32>>,
    pub south: Option<Vec<f32>>,
    pub east: Option<Vec<f32>>,
    pub west: Option<Vec<f32>>,
}

impl NeighborBuffers {
    pub fn get(&self, side: Link) -> Option<&[f32]> {
        match side {
            Link::North => self.north.as_deref(),
            Link::South => self.south.as_deref(),
            Link::East => self.east.as_deref(),
            Link::West => self.west.as_deref(),
            Link::Ramp => None,
        }
    }

    fn get_mut(&mut self, side: Link) -> Option<&mut Vec<f32>> {
        match side {
            Link::North => self.north.as_mut(),
            Link::South => self.south.as_mut(),
            Link::East => self.east.as_mut(),
            Link::West => self.west.as_mut(),
            Link::Ramp => None,
        }
    }
}

/// Per-PE bookkeeping of the exchange protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeState {
    nz: usize,
    pub buffers: NeighborBuffers,
    step: usize,
    started: bool,
    waiting_at_barrier: bool,
    completions: [u8; 4],
    /// Next word index per data color.
    cursor: [usize; 4],
    /// Which of the PE's two receive actions on a data color is next.
    phase: [u8; 4],
    done: Color,
    /// Words received since construction (the Jx kernel charges them).
    pub words_received: u64,
}

impl ExchangeState {
    pub fn new(pe: PeCoord, dims: FabricDims, nz: usize, done: Color) -> Self {
        let side = |l| dims.neighbor(pe, l).map(|_| vec![0.0; nz]);
        Self {
            nz,
            buffers: NeighborBuffers {
                north: side(N),
                south: side(S),
                east: side(E),
                west: side(W),
            },
            step: 0,
            started: false,
            waiting_at_barrier: false,
            completions: [0; 4],
            cursor: [0; 4],
            phase: [0; 4],
            done,
            words_received: 0,
        }
    }
}

pub trait ExchangeHost {
    fn exchange(&mut self) -> &mut ExchangeState;
    /// Column this PE sends to its neighbors.
    fn outgoing(&self) -> &[f32];
}

fn data_slot(color: Color) -> usize {
    DATA_COLORS
        .iter()
        .position(|&c| c == color)
        .expect("data color")
}

/// Begins an exchange on this PE. The PE's done color is activated once all
/// four steps have passed their barriers.
pub fn start_exchange<S: ExchangeHost>(s: &mut S, ctx: &mut Ctx) {
    s.exchange().started = true;
    run_step(s, ctx);
    maybe_arrive(s.exchange(), ctx);
}

fn run_step<S: ExchangeHost>(s: &mut S, ctx: &mut Ctx) {
    let pe = ctx.pe();
    let step = s.exchange().step;
    for a in actions_of(pe, step) {
        let present = ctx.has_neighbor(a.dir);
        match (a.role, present) {
            (Role::Send, true) => {
                let mut words: Vec<Payload> = s
                    .outgoing()
                    .iter()
                    .map(|v| Payload::Data(v.to_bits()))
                    .collect();
                words.push(Payload::Control(0));
                ctx.send(a.color, words);
                ctx.activate(a.completion);
            }
            (Role::Receive, true) => {
                let nz = s.exchange().nz;
                ctx.expect(a.color, nz as u32 + 1);
            }
            (_, false) => {
                // Nothing on the other side: keep the switch in step with
                // the schedule and report completion straight away.
                ctx.advance_switch(a.color);
                if a.role == Role::Receive {
                    s.exchange().phase[data_slot(a.color)] ^= 1;
                }
                ctx.activate(a.completion);
            }
        }
    }
}

fn maybe_arrive(ex: &mut ExchangeState, ctx: &mut Ctx) {
    if ex.started && !ex.waiting_at_barrier && ex.completions[ex.step] == 2 {
        ex.waiting_at_barrier = true;
        ctx.barrier(ex.step as u32, EXCHANGE_STEP);
    }
}

fn on_data<S: ExchangeHost>(
    s: &mut S,
    ctx: &mut Ctx,
    color: Color,
    d: Delivery,
) -> Result<(), FabricError> {
    let pe = ctx.pe();
    let slot = data_slot(color);
    let ex = s.exchange();
    let action = actions_on(pe, color)
        .filter(|a| a.role == Role::Receive)
        .nth(ex.phase[slot] as usize)
        .ok_or_else(|| ctx.fail("exchange data on a color this PE never receives"))?;
    match d {
        Delivery::Data(w) => {
            let at = ex.cursor[slot];
            let buf = ex
                .buffers
                .get_mut(action.dir)
                .ok_or_else(|| ctx.fail("exchange data from a missing side"))?;
            *buf.get_mut(at)
                .ok_or_else(|| ctx.fail("exchange column overflow"))? = f32::from_bits(w);
            ex.cursor[slot] += 1;
            ex.words_received += 1;
        }
        Delivery::Control(_) => {
            if ex.cursor[slot] != ex.nz {
                return Err(ctx.fail("exchange column ended early"));
            }
            ex.cursor[slot] = 0;
            ex.phase[slot] ^= 1;
            ctx.activate(action.completion);
        }
        Delivery::Activation => return Err(ctx.fail("exchange data color activated locally")),
    }
    Ok(())
}

fn on_completion<S: ExchangeHost>(s: &mut S, ctx: &mut Ctx) -> Result<(), FabricError> {
    let ex = s.exchange();
    ex.completions[ex.step] += 1;
    if ex.completions[ex.step] > 2 {
        return Err(ctx.fail("more than two exchange completions in one step"));
    }
    maybe_arrive(ex, ctx);
    Ok(())
}

fn on_step<S: ExchangeHost>(s: &mut S, ctx: &mut Ctx) {
    let ex = s.exchange();
    ex.waiting_at_barrier = false;
    ex.step += 1;
    if ex.step == 4 {
        ex.step = 0;
        ex.started = false;
        ex.completions = [0; 4];
        ctx.activate(ex.done);
    } else {
        run_step(s, ctx);
    }
}

/// Configures the exchange routes on every PE and registers its handlers
/// for `C1..=C12` and [`EXCHANGE_STEP`].
pub fn install_exchange<S: ExchangeHost + 'static>(
    fabric: &mut Fabric<S>,
) -> Result<(), FabricError> {
    let dims = fabric.dims();
    for i in 0..dims.pe_count() {
        let pe = dims.coord(i);
        for (color, cfg) in router_configs(pe) {
            fabric.set_router_config(pe, color, cfg)?;
        }
    }
    for color in DATA_COLORS {
        fabric.on_color_all(
            color,
            Box::new(move |s: &mut S, ctx: &mut Ctx, d| on_data(s, ctx, color, d)),
        )?;
    }
    for color in COMPLETION_COLORS {
        fabric.on_color_all(
            color,
            Box::new(|s: &mut S, ctx: &mut Ctx, _| on_completion(s, ctx)),
        )?;
    }
    fabric.on_color_all(
        EXCHANGE_STEP,
        Box::new(|s: &mut S, ctx: &mut Ctx, _| {
            on_step(s, ctx);
            Ok(())
        }),
    )?;
    Ok(())
}

struct Solo {
    column: Vec<f32>,
    ex: ExchangeState,
}

impl ExchangeHost for Solo {
    fn exchange(&mut self) -> &mut ExchangeState {
        &mut self.ex
    }
    fn outgoing(&self) -> &[f32] {
        &self.column
    }
}

/// Runs one exchange on a fresh fabric where PE `i` (row-major) holds
/// `columns[i]`. Returns every PE's received buffers and the full log.
pub fn neighbor_exchange(
    dims: FabricDims,
    columns: &[Vec<f32>],
) -> Result<(Vec<NeighborBuffers>, EventLog), FabricError> {
    let nz = columns.first().map_or(0, Vec::len);
    if columns.len() != dims.pe_count() || columns.iter().any(|c| c.len() != nz) {
        return Err(FabricError::Program {
            pe: PeCoord::new(0, 0),
            message: "need one column of equal length per PE".into(),
        });
    }
    let start = Color::of(super::FIRST_PROGRAM_COLOR);
    let done = Color::of(super::FIRST_PROGRAM_COLOR + 1);
    let mut fabric = Fabric::new(dims, DEFAULT_MEMORY_BUDGET, false, |pe| Solo {
        column: columns[dims.index(pe)].clone(),
        ex: ExchangeState::new(pe, dims, nz, done),
    });
    install_exchange(&mut fabric)?;
    fabric.on_color_all(
        start,
        Box::new(|s: &mut Solo, ctx: &mut Ctx, _| {
            start_exchange(s, ctx);
            Ok(())
        }),
    )?;
    fabric.on_color_all(done, Box::new(|_: &mut Solo, _: &mut Ctx, _| Ok(())))?;
    fabric.activate_all(start);
    let log = fabric.run()?;
    Ok((fabric.states().map(|s| s.ex.buffers.clone()).collect(), log))
}
