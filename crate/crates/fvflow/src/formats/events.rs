use std::io::{BufRead, Write};

use super::FormatError;
use fvflow_core::dataflow::CgState;
use fvflow_core::fabric::{Event, EventLog};

const EVENTS_HEADER: &str = "# fvflow events 1: tick pe_x pe_y kind color detail";
const TRACE_HEADER: &str = "# fvflow state-trace 1: tick state";

pub fn write_event_log<W: Write>(log: &EventLog, mut out: W) -> Result<(), FormatError> {
    writeln!(out, "{EVENTS_HEADER}")?;
    for e in log.events() {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

/// Reads a log written by [`write_event_log`]; `#` lines are skipped.
pub fn read_event_log<R: BufRead>(input: R) -> Result<EventLog, FormatError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        events.push(
            line.parse::<Event>()
                .map_err(|e| FormatError::parse(i + 1, e.to_string()))?,
        );
    }
    Ok(events.into_iter().collect())
}

pub fn write_state_trace<W: Write>(
    trace: &[(u64, CgState)],
    mut out: W,
) -> Result<(), FormatError> {
    writeln!(out, "{TRACE_HEADER}")?;
    for (tick, s) in trace {
        writeln!(out, "{tick} {}", s.name())?;
    }
    Ok(())
}

pub fn read_state_trace<R: BufRead>(input: R) -> Result<Vec<(u64, CgState)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = || FormatError::parse(i + 1, "expected `tick STATE`");
        let (tick, name) = line.split_once(' ').ok_or_else(bad)?;
        out.push((
            tick.parse().map_err(|_| bad())?,
            CgState::from_name(name.trim()).ok_or_else(bad)?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fvflow_core::comm::neighbor_exchange;
    use fvflow_core::fabric::FabricDims;

    #[test]
    fn log_round_trip() {
        let d = FabricDims::new(2, 2).unwrap();
        let (_, log) = neighbor_exchange(d, &[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let mut buf = Vec::new();
        write_event_log(&log, &mut buf).unwrap();
        assert_eq!(read_event_log(buf.as_slice()).unwrap(), log);
        assert!(read_event_log("0 0 0 nonsense - -\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let t = vec![
            (0, CgState::Init),
            (0, CgState::Exchange),
            (9, CgState::ApplyJ),
        ];
        let mut buf = Vec::new();
        write_state_trace(&t, &mut buf).unwrap();
        assert_eq!(read_state_trace(buf.as_slice()).unwrap(), t);
    }
}
