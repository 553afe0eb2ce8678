use alloc::boxed::Box;
use alloc::vec::Vec;

use super::{BCAST_COL, BCAST_ROW, REDUCE_COL, REDUCE_ROW};
use crate::fabric::{
    Color, Ctx, Delivery, EventLog, Fabric, FabricDims, FabricError, Link, LinkSet, Payload,
    PeCoord, Route, RouterConfig, DEFAULT_MEMORY_BUDGET,
};

/// Per-PE state of the all-reduce.
///
/// Phase 1 folds each row left to right into its right-most PE, phase 2
/// folds the right column top to bottom into the bottom-right PE, phase 3
/// broadcasts the total up the right column and then left along every row.
/// Each PE combines as `op(value_from_upstream, own)`.
#[derive(Debug, Clone)]
pub struct ReduceState {
    op: fn(f32, f32) -> f32,
    done: Color,
    own: Option<f32>,
    from_west: Option<f32>,
    west_closed: bool,
    row_total: Option<f32>,
    from_north: Option<f32>,
    north_closed: bool,
    /// Value of the most recently completed reduction.
    pub result: Option<f32>,
    /// Reduce/broadcast packets this PE received since construction.
    pub packets_received: u64,
}

impl ReduceState {
    pub fn new(op: fn(f32, f32) -> f32, done: Color) -> Self {
        Self {
            op,
            done,
            own: None,
            from_west: None,
            west_closed: false,
            row_total: None,
            from_north: None,
            north_closed: false,
            result: None,
            packets_received: 0,
        }
    }
}

pub trait AllReduceHost {
    fn reduce(&mut self) -> &mut ReduceState;
}

fn is_right(ctx: &Ctx) -> bool {
    !ctx.has_neighbor(Link::East)
}

/// Contributes `value` from this PE. The PE's done color is activated when
/// the global result is in [`ReduceState::result`].
pub fn start_all_reduce<S: AllReduceHost>(s: &mut S, ctx: &mut Ctx, value: f32) {
    let st = s.reduce();
    st.own = Some(value);
    let pe = ctx.pe();
    if pe.x > 0 {
        ctx.expect(REDUCE_ROW, 2);
    }
    if is_right(ctx) && pe.y > 0 {
        ctx.expect(REDUCE_COL, 2);
    }
    if is_right(ctx) && ctx.has_neighbor(Link::South) {
        ctx.expect(BCAST_COL, 1);
    }
    if !is_right(ctx) {
        ctx.expect(BCAST_ROW, 1);
    }
    progress_row(st, ctx);
}

fn progress_row(st: &mut ReduceState, ctx: &mut Ctx) {
    let Some(own) = st.own else { return };
    if st.row_total.is_some() {
        return;
    }
    let acc = if ctx.pe().x == 0 {
        own
    } else if st.west_closed {
        (st.op)(
            st.from_west
                .expect("west value precedes its control packet"),
            own,
        )
    } else {
        return;
    };
    if is_right(ctx) {
        st.row_total = Some(acc);
        progress_col(st, ctx);
    } else {
        // Marks the row phase as done on this PE; only the right column
        // reads the value.
        st.row_total = Some(acc);
        ctx.send(
            REDUCE_ROW,
            alloc::vec![Payload::Data(acc.to_bits()), Payload::Control(0)],
        );
    }
}

fn progress_col(st: &mut ReduceState, ctx: &mut Ctx) {
    let Some(row) = st.row_total else { return };
    let acc = if ctx.pe().y == 0 {
        row
    } else if st.north_closed {
        (st.op)(
            st.from_north
                .expect("north value precedes its control packet"),
            row,
        )
    } else {
        return;
    };
    if ctx.has_neighbor(Link::South) {
        ctx.send(
            REDUCE_COL,
            alloc::vec![Payload::Data(acc.to_bits()), Payload::Control(0)],
        );
    } else {
        broadcast(st, ctx, acc);
    }
}

/// Stores the result, forwards it where this PE originates the broadcast,
/// and signals completion.
fn broadcast(st: &mut ReduceState, ctx: &mut Ctx, total: f32) {
    let pe = ctx.pe();
    if is_right(ctx) {
        let bottom = !ctx.has_neighbor(Link::South);
        if bottom && ctx.has_neighbor(Link::North) {
            ctx.send(BCAST_COL, alloc::vec![Payload::Data(total.to_bits())]);
        }
        if pe.x > 0 {
            ctx.send(BCAST_ROW, alloc::vec![Payload::Data(total.to_bits())]);
        }
    }
    *st = ReduceState {
        result: Some(total),
        packets_received: st.packets_received,
        ..ReduceState::new(st.op, st.done)
    };
    ctx.activate(st.done);
}

fn on_packet<S: AllReduceHost>(
    s: &mut S,
    ctx: &mut Ctx,
    color: Color,
    d: Delivery,
) -> Result<(), FabricError> {
    let st = s.reduce();
    st.packets_received += 1;
    let word = match d {
        Delivery::Data(w) => Some(f32::from_bits(w)),
        Delivery::Control(_) => None,
        Delivery::Activation => return Err(ctx.fail("all-reduce color activated locally")),
    };
    match (color, word) {
        (c, Some(v)) if c == REDUCE_ROW => st.from_west = Some(v),
        (c, None) if c == REDUCE_ROW => {
            st.west_closed = true;
            progress_row(st, ctx);
        }
        (c, Some(v)) if c == REDUCE_COL => st.from_north = Some(v),
        (c, None) if c == REDUCE_COL => {
            st.north_closed = true;
            progress_col(st, ctx);
        }
        (c, Some(v)) if c == BCAST_COL || c == BCAST_ROW => broadcast(st, ctx, v),
        _ => return Err(ctx.fail("unexpected all-reduce packet")),
    }
    Ok(())
}

fn fixed(rx: impl Into<LinkSet>, tx: impl Into<LinkSet>) -> RouterConfig {
    RouterConfig::fixed(Route::new(rx, tx))
}

/// Routes of the four all-reduce colors on `pe`.
pub fn reduce_router_configs(pe: PeCoord, dims: FabricDims) -> Vec<(Color, RouterConfig)> {
    use Link::{East, North, Ramp, South, West};
    let (w, h) = (dims.width, dims.height);
    let mut out = Vec::new();
    // Upstream receives, then the switch flips to forward downstream.
    let relay = |from: Link, to: Link| {
        RouterConfig::new(Route::new(from, Ramp), Route::new(Ramp, to), true)
    };
    if w > 1 {
        let row = match pe.x {
            0 => fixed(Ramp, East),
            x if x == w - 1 => fixed(West, Ramp),
            _ => relay(West, East),
        };
        out.push((REDUCE_ROW, row));
        let bcast = match pe.x {
            0 => fixed(East, Ramp),
            x if x == w - 1 => fixed(Ramp, West),
            _ => fixed(East, LinkSet::of(&[Ramp, West])),
        };
        out.push((BCAST_ROW, bcast));
    }
    if h > 1 && pe.x == w - 1 {
        let col = match pe.y {
            0 => fixed(Ramp, South),
            y if y == h - 1 => fixed(North, Ramp),
            _ => relay(North, South),
        };
        out.push((REDUCE_COL, col));
        let bcast = match pe.y {
            0 => fixed(South, Ramp),
            y if y == h - 1 => fixed(Ramp, North),
            _ => fixed(South, LinkSet::of(&[Ramp, North])),
        };
        out.push((BCAST_COL, bcast));
    }
    out
}

/// Configures all-reduce routes on every PE and registers its handlers.
pub fn install_all_reduce<S: AllReduceHost + 'static>(
    fabric: &mut Fabric<S>,
) -> Result<(), FabricError> {
    let dims = fabric.dims();
    for i in 0..dims.pe_count() {
        let pe = dims.coord(i);
        for (color, cfg) in reduce_router_configs(pe, dims) {
            fabric.set_router_config(pe, color, cfg)?;
        }
    }
    for color in [REDUCE_ROW, REDUCE_COL, BCAST_COL, BCAST_ROW] {
        fabric.on_color_all(
            color,
            Box::new(move |s: &mut S, ctx: &mut Ctx, d| on_packet(s, ctx, color, d)),
        )?;
    }
    Ok(())
}

struct Solo {
    value: f32,
    st: ReduceState,
}

impl AllReduceHost for Solo {
    fn reduce(&mut self) -> &mut ReduceState {
        &mut self.st
    }
}

/// Runs one all-reduce on a fresh fabric where PE `i` (row-major)
/// contributes `values[i]`. Returns every PE's result and the full log.
pub fn all_reduce(
    dims: FabricDims,
    values: &[f32],
    op: fn(f32, f32) -> f32,
) -> Result<(Vec<f32>, EventLog), FabricError> {
    if values.len() != dims.pe_count() {
        return Err(FabricError::Program {
            pe: PeCoord::new(0, 0),
            message: "need one value per PE".into(),
        });
    }
    let start = Color::of(super::FIRST_PROGRAM_COLOR);
    let done = Color::of(super::FIRST_PROGRAM_COLOR + 1);
    let mut fabric = Fabric::new(dims, DEFAULT_MEMORY_BUDGET, false, |pe| Solo {
        value: values[dims.index(pe)],
        st: ReduceState::new(op, done),
    });
    install_all_reduce(&mut fabric)?;
    fabric.on_color_all(
        start,
        Box::new(|s: &mut Solo, ctx: &mut Ctx, _| {
            let v = s.value;
            start_all_reduce(s, ctx, v);
            Ok(())
        }),
    )?;
    fabric.on_color_all(done, Box::new(|_: &mut Solo, _: &mut Ctx, _| Ok(())))?;
    fabric.activate_all(start);
    let log = fabric.run()?;
    let results = fabric
        .states()
        .map(|s| s.st.result)
        .collect::<Option<Vec<f32>>>()
        .ok_or(FabricError::Program {
            pe: PeCoord::new(0, 0),
            message: "all-reduce left a PE without a result".into(),
        })?;
    Ok((results, log))
}
