//! Collectives built on the fabric: the four-step cardinal neighbor exchange
//! and the row/column all-reduce.
//!
//! Color plan: `C1..=C4` carry exchange data, `C5..=C12` are exchange
//! completion callbacks, [`EXCHANGE_STEP`] releases each exchange step,
//! `14..=17` belong to the all-reduce. Programs may use
//! [`FIRST_PROGRAM_COLOR`] and above.

mod allreduce;
mod exchange;

pub use allreduce::{
    all_reduce, install_all_reduce, reduce_router_configs, start_all_reduce, AllReduceHost,
    ReduceState,
};
pub use exchange::{
    install_exchange, neighbor_exchange, router_configs, start_exchange, Action, ExchangeHost,
    ExchangeState, NeighborBuffers, ParityClass, Role, SCHEDULE,
};

use alloc::vec::Vec;

use crate::fabric::{Color, FabricDims, PeCoord};

pub const C1: Color = Color::of(1);
pub const C2: Color = Color::of(2);
pub const C3: Color = Color::of(3);
pub const C4: Color = Color::of(4);
pub const C5: Color = Color::of(5);
pub const C6: Color = Color::of(6);
pub const C7: Color = Color::of(7);
pub const C8: Color = Color::of(8);
pub const C9: Color = Color::of(9);
pub const C10: Color = Color::of(10);
pub const C11: Color = Color::of(11);
pub const C12: Color = Color::of(12);
pub const EXCHANGE_STEP: Color = Color::of(13);
pub const REDUCE_ROW: Color = Color::of(14);
pub const REDUCE_COL: Color = Color::of(15);
pub const BCAST_COL: Color = Color::of(16);
pub const BCAST_ROW: Color = Color::of(17);
pub const FIRST_PROGRAM_COLOR: u8 = 20;

/// Exchange data colors.
pub const DATA_COLORS: [Color; 4] = [C1, C2, C3, C4];
/// Exchange completion colors.
pub const COMPLETION_COLORS: [Color; 8] = [C5, C6, C7, C8, C9, C10, C11, C12];

/// Leaf order of the all-reduce: rows top to bottom, each row left to right.
pub fn reduce_order_signature(dims: FabricDims) -> Vec<PeCoord> {
    (0..dims.pe_count()).map(|i| dims.coord(i)).collect()
}

/// Serial replica of the all-reduce combine: each row is folded left to
/// right starting from its first value, then the row totals are folded top
/// to bottom. `values` are in row-major order.
pub fn signature_fold<T: Copy>(
    width: usize,
    height: usize,
    values: &[T],
    op: impl Fn(T, T) -> T,
) -> T {
    assert!(
        width > 0 && height > 0 && values.len() == width * height,
        "values must cover the fabric"
    );
    let row = |y: usize| {
        values[y * width + 1..(y + 1) * width]
            .iter()
            .fold(values[y * width], |a, &v| op(a, v))
    };
    (1..height).fold(row(0), |a, y| op(a, row(y)))
}
