use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::router::{Color, Link};
use super::PeCoord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LogLevel {
    /// Every hop, delivery, task, activation and switch change.
    #[default]
    Full,
    /// Sends, barriers, marks and misroutes only.
    Protocol,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// A PE handed a batch of packets to its router.
    Send,
    /// A router accepted a packet from a neighbor link.
    Hop,
    /// A packet reached a PE through the ramp.
    Deliver,
    /// A handler ran for an activation.
    Task,
    Activate,
    Switch,
    Misroute,
    Barrier,
    Mark,
}

impl EventKind {
    const NAMES: [(EventKind, &'static str); 9] = [
        (EventKind::Send, "send"),
        (EventKind::Hop, "hop"),
        (EventKind::Deliver, "deliver"),
        (EventKind::Task, "task"),
        (EventKind::Activate, "activate"),
        (EventKind::Switch, "switch"),
        (EventKind::Misroute, "misroute"),
        (EventKind::Barrier, "barrier"),
        (EventKind::Mark, "mark"),
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES
            .iter()
            .find(|(k, _)| *k == self)
            .map(|(_, n)| *n)
            .unwrap_or("?")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detail {
    None,
    /// Data and control packet counts of a send.
    Words {
        data: u32,
        control: u32,
    },
    Data(u32),
    Control(u32),
    /// Packet entering a router on this link; `control` marks router commands.
    In {
        link: Link,
        control: bool,
    },
    Position(u8),
    Barrier(u32),
    Mark(u32),
    /// Misrouted packet: the link it arrived on or was bound for.
    Stray(Link),
}

impl fmt::Display for Detail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Detail::None => write!(f, "-"),
            Detail::Words { data, control } => write!(f, "words={data}+{control}"),
            Detail::Data(w) => write!(f, "data={w:08x}"),
            Detail::Control(w) => write!(f, "ctrl={w:08x}"),
            Detail::In { link, control } => {
                write!(f, "in={}{}", link.letter(), if control { "!" } else { "" })
            }
            Detail::Position(p) => write!(f, "pos={p}"),
            Detail::Barrier(id) => write!(f, "barrier={id}"),
            Detail::Mark(m) => write!(f, "mark={m}"),
            Detail::Stray(l) => write!(f, "stray={}", l.letter()),
        }
    }
}

impl FromStr for Detail {
    type Err = ParseEventError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "-" {
            return Ok(Detail::None);
        }
        let (key, val) = s.split_once('=').ok_or(ParseEventError::Detail)?;
        let num = |v: &str| v.parse::<u32>().map_err(|_| ParseEventError::Detail);
        let hex = |v: &str| u32::from_str_radix(v, 16).map_err(|_| ParseEventError::Detail);
        fn link(v: &str) -> Result<(Link, &str), ParseEventError> {
            let mut cs = v.chars();
            let l = cs
                .next()
                .and_then(Link::from_letter)
                .ok_or(ParseEventError::Detail)?;
            Ok((l, cs.as_str()))
        }
        Ok(match key {
            "words" => {
                let (d, c) = val.split_once('+').ok_or(ParseEventError::Detail)?;
                Detail::Words {
                    data: num(d)?,
                    control: num(c)?,
                }
            }
            "data" => Detail::Data(hex(val)?),
            "ctrl" => Detail::Control(hex(val)?),
            "in" => match link(val)? {
                (l, "") => Detail::In {
                    link: l,
                    control: false,
                },
                (l, "!") => Detail::In {
                    link: l,
                    control: true,
                },
                _ => return Err(ParseEventError::Detail),
            },
            "pos" => Detail::Position(val.parse().map_err(|_| ParseEventError::Detail)?),
            "barrier" => Detail::Barrier(num(val)?),
            "mark" => Detail::Mark(num(val)?),
            "stray" => match link(val)? {
                (l, "") => Detail::Stray(l),
                _ => return Err(ParseEventError::Detail),
            },
            _ => return Err(ParseEventError::Detail),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub tick: u64,
    pub pe: PeCoord,
    pub kind: EventKind,
    pub color: Option<Color>,
    pub detail: Detail,
}

/// One line: `tick pe_x pe_y kind color detail`, color `-` when absent.
impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} ",
            self.tick,
            self.pe.x,
            self.pe.y,
            self.kind.name()
        )?;
        match self.color {
            Some(c) => write!(f, "{c}")?,
            None => write!(f, "-")?,
        }
        write!(f, " {}", self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ParseEventError {
    #[error("expected 6 whitespace-separated fields")]
    Fields,
    #[error("bad number")]
    Number,
    #[error("unknown event kind")]
    Kind,
    #[error("bad color")]
    Color,
    #[error("bad detail field")]
    Detail,
}

impl FromStr for Event {
    type Err = ParseEventError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [tick, x, y, kind, color, detail] = parts[..] else {
            return Err(ParseEventError::Fields);
        };
        let kind = EventKind::NAMES
            .iter()
            .find(|(_, n)| *n == kind)
            .map(|(k, _)| *k)
            .ok_or(ParseEventError::Kind)?;
        let color = match color {
            "-" => None,
            c => Some(
                c.parse::<u8>()
                    .ok()
                    .and_then(|id| Color::new(id).ok())
                    .ok_or(ParseEventError::Color)?,
            ),
        };
        Ok(Event {
            tick: tick.parse().map_err(|_| ParseEventError::Number)?,
            pe: PeCoord {
                x: x.parse().map_err(|_| ParseEventError::Number)?,
                y: y.parse().map_err(|_| ParseEventError::Number)?,
            },
            kind,
            color,
            detail: detail.parse()?,
        })
    }
}

/// Ordered record of everything observable in a run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, e: Event) {
        debug_assert!(self.events.last().is_none_or(|l| l.tick <= e.tick));
        self.events.push(e);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn extend(&mut self, other: EventLog) {
        self.events.extend(other.events);
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    /// Index of the first event where the two logs differ, if any.
    pub fn first_divergence(&self, other: &EventLog) -> Option<usize> {
        let common = self.events.len().min(other.events.len());
        (0..common)
            .find(|&i| self.events[i] != other.events[i])
            .or((self.events.len() != other.events.len()).then_some(common))
    }
}

impl FromIterator<Event> for EventLog {
    fn from_iter<I: IntoIterator<Item = Event>>(iter: I) -> Self {
        Self {
            events: iter.into_iter().collect(),
        }
    }
}
