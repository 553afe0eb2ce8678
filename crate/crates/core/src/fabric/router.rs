use core::fmt;

use super::FabricError;

/// Number of distinct colors a router can hold routes for.
pub const COLOR_COUNT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Color(u8);

impl Color {
    pub fn new(id: u8) -> Result<Self, FabricError> {
        if (id as usize) < COLOR_COUNT {
            Ok(Self(id))
        } else {
            Err(FabricError::BadColor(id))
        }
    }

    /// For color constants; panics at compile time when used in a const.
    pub const fn of(id: u8) -> Self {
        assert!((id as usize) < COLOR_COUNT, "color id out of range");
        Self(id)
    }

    pub const fn id(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Router ports. `North` is toward row `y - 1`, `West` toward column `x - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    North,
    East,
    South,
    West,
    Ramp,
}

impl Link {
    /// Router input processing order.
    pub const ALL: [Link; 5] = [Link::North, Link::East, Link::South, Link::West, Link::Ramp];
    pub const CARDINAL: [Link; 4] = [Link::North, Link::East, Link::South, Link::West];

    pub fn opposite(self) -> Link {
        match self {
            Link::North => Link::South,
            Link::South => Link::North,
            Link::East => Link::West,
            Link::West => Link::East,
            Link::Ramp => Link::Ramp,
        }
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn letter(self) -> char {
        match self {
            Link::North => 'N',
            Link::East => 'E',
            Link::South => 'S',
            Link::West => 'W',
            Link::Ramp => 'R',
        }
    }

    pub fn from_letter(c: char) -> Option<Link> {
        Link::ALL.into_iter().find(|l| l.letter() == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LinkSet(u8);

impl LinkSet {
    pub const EMPTY: LinkSet = LinkSet(0);

    pub fn of(links: &[Link]) -> Self {
        LinkSet(links.iter().fold(0, |m, l| m | l.bit()))
    }

    pub fn contains(self, l: Link) -> bool {
        self.0 & l.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Link> {
        Link::ALL.into_iter().filter(move |l| self.contains(*l))
    }
}

impl From<Link> for LinkSet {
    fn from(l: Link) -> Self {
        LinkSet(l.bit())
    }
}

impl fmt::Display for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.iter() {
            write!(f, "{}", l.letter())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Route {
    pub rx: LinkSet,
    pub tx: LinkSet,
}

impl Route {
    pub fn new(rx: impl Into<LinkSet>, tx: impl Into<LinkSet>) -> Self {
        Self {
            rx: rx.into(),
            tx: tx.into(),
        }
    }
}

/// Routing table of one color on one router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RouterConfig {
    pub positions: [Route; 2],
    /// Advancing from position 1 returns to position 0 instead of sticking.
    pub ring: bool,
}

impl RouterConfig {
    pub fn new(pos0: Route, pos1: Route, ring: bool) -> Self {
        Self {
            positions: [pos0, pos1],
            ring,
        }
    }

    /// Same route in both positions, so switch advances are harmless.
    pub fn fixed(route: Route) -> Self {
        Self::new(route, route, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RouterState {
    pub config: RouterConfig,
    pub current: u8,
}

impl RouterState {
    pub fn new(config: RouterConfig) -> Self {
        Self { config, current: 0 }
    }

    pub fn route(&self) -> Route {
        self.config.positions[self.current as usize]
    }

    pub fn advance(&mut self) {
        self.current = match (self.current, self.config.ring) {
            (0, _) => 1,
            (_, true) => 0,
            (_, false) => 1,
        };
    }
}
