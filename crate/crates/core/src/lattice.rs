//! Assembly geometry and the text form of a layout.
//!
//! A layout is a 17x17 grid of pin kinds. Twenty-five cells are fixed guide
//! tubes (24 thimbles plus the central instrument tube); the remaining 264
//! cells hold either plain fuel or a gadolinia-bearing rod. The token form is
//! one character per cell (`f`, `g`, `c`) in row-major order with a newline
//! closing every row.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Cells per side of the assembly.
pub const SIDE: usize = 17;
/// Total number of lattice cells.
pub const CELLS: usize = SIDE * SIDE;
/// Row/column index of the central instrument tube.
pub const CENTER: usize = 8;
/// Number of guide-tube cells, instrument tube included.
pub const GT_COUNT: usize = 25;
/// Number of cells that may hold fuel or Gd.
pub const FREE_CELLS: usize = CELLS - GT_COUNT;
/// Length in bytes of a serialized layout (17 rows of 17 tokens plus newline).
pub const TOKEN_TEXT_LEN: usize = SIDE * (SIDE + 1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("unexpected character {found:?} at byte {position}")]
    BadCharacter { position: usize, found: char },
    #[error("malformed layout text: {0}")]
    BadShape(String),
    #[error("guide-tube mismatch at ({}, {})", .0.row(), .0.col())]
    GtMismatch(Coord),
    #[error("non-finite value in prompt: {0}")]
    NonFinite(&'static str),
    #[error("inventory {0} outside 0..={FREE_CELLS}")]
    InventoryOutOfRange(usize),
    #[error("coordinate ({0}, {1}) outside the 17x17 lattice")]
    CoordOutOfRange(usize, usize),
    #[error("({}, {}) is not a free fuel cell", .0.row(), .0.col())]
    NotFreeCell(Coord),
}

/// The three pin kinds that can occupy a lattice cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PinKind {
    Fuel,
    Gd,
    GuideTube,
}

impl PinKind {
    pub const ALL: [PinKind; 3] = [PinKind::Fuel, PinKind::Gd, PinKind::GuideTube];

    pub fn token(self) -> char {
        match self {
            PinKind::Fuel => 'f',
            PinKind::Gd => 'g',
            PinKind::GuideTube => 'c',
        }
    }

    pub fn from_token(c: char) -> Option<Self> {
        match c {
            'f' => Some(PinKind::Fuel),
            'g' => Some(PinKind::Gd),
            'c' => Some(PinKind::GuideTube),
            _ => None,
        }
    }
}

/// A cell position, row and column both in `0..17`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    row: u8,
    col: u8,
}

impl Coord {
    pub fn new(row: usize, col: usize) -> Result<Self, LatticeError> {
        if row < SIDE && col < SIDE {
            Ok(Coord::at(row, col))
        } else {
            Err(LatticeError::CoordOutOfRange(row, col))
        }
    }

    /// Panics on out-of-range input; for literals and loop indices.
    pub const fn at(row: usize, col: usize) -> Self {
        assert!(row < SIDE && col < SIDE);
        Coord {
            row: row as u8,
            col: col as u8,
        }
    }

    pub fn from_index(idx: usize) -> Self {
        Coord::at(idx / SIDE, idx % SIDE)
    }

    pub fn row(self) -> usize {
        self.row as usize
    }

    pub fn col(self) -> usize {
        self.col as usize
    }

    /// Row-major raster index.
    pub fn index(self) -> usize {
        self.row() * SIDE + self.col()
    }

    pub fn all() -> impl Iterator<Item = Coord> {
        (0..CELLS).map(Coord::from_index)
    }
}

/// An element of the dihedral group of the square, acting about the center
/// cell (8, 8). Elements 0..4 are rotations by 0/90/180/270 degrees; 4..8 are
/// the same rotations followed by a mirror across the vertical axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct D4(u8);

impl D4 {
    pub const IDENTITY: D4 = D4(0);
    pub const ALL: [D4; 8] = [D4(0), D4(1), D4(2), D4(3), D4(4), D4(5), D4(6), D4(7)];

    pub fn apply(self, c: Coord) -> Coord {
        let center = CENTER as i32;
        let (mut dr, mut dc) = (c.row() as i32 - center, c.col() as i32 - center);
        for _ in 0..(self.0 % 4) {
            (dr, dc) = (dc, -dr);
        }
        if self.0 >= 4 {
            dc = -dc;
        }
        Coord::at((dr + center) as usize, (dc + center) as usize)
    }
}

/// Standard 17x17 guide-tube positions, 0-indexed; the last entry is the
/// instrument tube.
const GT_COORDS: [(usize, usize); GT_COUNT] = [
    (2, 5),
    (2, 8),
    (2, 11),
    (3, 3),
    (3, 13),
    (5, 2),
    (5, 5),
    (5, 8),
    (5, 11),
    (5, 14),
    (8, 2),
    (8, 5),
    (8, 11),
    (8, 14),
    (11, 2),
    (11, 5),
    (11, 8),
    (11, 11),
    (11, 14),
    (13, 3),
    (13, 13),
    (14, 5),
    (14, 8),
    (14, 11),
    (8, 8),
];

/// The fixed set of guide-tube cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtPattern {
    coords: Vec<Coord>,
    mask: [bool; CELLS],
}

impl GtPattern {
    /// Guide-tube cells in raster order.
    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn contains(&self, c: Coord) -> bool {
        self.mask[c.index()]
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

struct Geometry {
    gt: GtPattern,
    free: Vec<Coord>,
    free_index: [Option<u16>; CELLS],
}

fn geometry() -> &'static Geometry {
    static GEOMETRY: OnceLock<Geometry> = OnceLock::new();
    GEOMETRY.get_or_init(|| {
        let mut mask = [false; CELLS];
        for &(r, c) in &GT_COORDS {
            mask[Coord::at(r, c).index()] = true;
        }
        let coords: Vec<Coord> = Coord::all().filter(|c| mask[c.index()]).collect();
        let free: Vec<Coord> = Coord::all().filter(|c| !mask[c.index()]).collect();
        let mut free_index = [None; CELLS];
        for (i, c) in free.iter().enumerate() {
            free_index[c.index()] = Some(i as u16);
        }
        Geometry {
            gt: GtPattern { coords, mask },
            free,
            free_index,
        }
    })
}

pub fn gt_pattern() -> &'static GtPattern {
    &geometry().gt
}

pub fn is_guide_tube(c: Coord) -> bool {
    geometry().gt.mask[c.index()]
}

/// The 264 non-guide-tube cells in raster order. Per-pin vectors elsewhere in
/// the crate (pin powers, policy logits) are indexed by position in this list.
pub fn free_cells() -> &'static [Coord] {
    &geometry().free
}

/// Position of `c` within [`free_cells`], or `None` for guide tubes.
pub fn free_index(c: Coord) -> Option<usize> {
    geometry().free_index[c.index()].map(usize::from)
}

/// Serialized layout text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenText(String);

impl TokenText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for TokenText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for TokenText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// A valid assembly layout: guide tubes exactly on the fixed pattern, every
/// other cell fuel or Gd.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LatticeLayout {
    grid: [PinKind; CELLS],
}

impl LatticeLayout {
    pub fn all_fuel() -> Self {
        let mut grid = [PinKind::Fuel; CELLS];
        for c in gt_pattern().coords() {
            grid[c.index()] = PinKind::GuideTube;
        }
        LatticeLayout { grid }
    }

    /// Builds a layout with Gd at exactly the given cells (duplicates ignored).
    pub fn from_gd_positions<I>(positions: I) -> Result<Self, LatticeError>
    where
        I: IntoIterator<Item = Coord>,
    {
        let mut layout = LatticeLayout::all_fuel();
        for c in positions {
            if is_guide_tube(c) {
                return Err(LatticeError::NotFreeCell(c));
            }
            layout.grid[c.index()] = PinKind::Gd;
        }
        Ok(layout)
    }

    /// Builds a layout from per-free-cell Gd flags in [`free_cells`] order.
    pub fn from_free_mask(gd: &[bool]) -> Result<Self, LatticeError> {
        if gd.len() != FREE_CELLS {
            return Err(LatticeError::BadShape(format!(
                "expected {FREE_CELLS} free-cell flags, got {}",
                gd.len()
            )));
        }
        let mut layout = LatticeLayout::all_fuel();
        for (c, &is_gd) in free_cells().iter().zip(gd) {
            if is_gd {
                layout.grid[c.index()] = PinKind::Gd;
            }
        }
        Ok(layout)
    }

    /// Validates a full grid against the guide-tube pattern.
    pub fn from_grid(grid: [[PinKind; SIDE]; SIDE]) -> Result<Self, LatticeError> {
        let mut flat = [PinKind::Fuel; CELLS];
        for c in Coord::all() {
            let kind = grid[c.row()][c.col()];
            if (kind == PinKind::GuideTube) != is_guide_tube(c) {
                return Err(LatticeError::GtMismatch(c));
            }
            flat[c.index()] = kind;
        }
        Ok(LatticeLayout { grid: flat })
    }

    pub fn get(&self, c: Coord) -> PinKind {
        self.grid[c.index()]
    }

    pub fn cells(&self) -> &[PinKind; CELLS] {
        &self.grid
    }

    pub fn to_grid(&self) -> [[PinKind; SIDE]; SIDE] {
        let mut out = [[PinKind::Fuel; SIDE]; SIDE];
        for c in Coord::all() {
            out[c.row()][c.col()] = self.grid[c.index()];
        }
        out
    }

    pub fn gd_count(&self) -> usize {
        self.grid.iter().filter(|&&k| k == PinKind::Gd).count()
    }

    /// Gd cells in raster order.
    pub fn gd_positions(&self) -> Vec<Coord> {
        free_cells()
            .iter()
            .copied()
            .filter(|c| self.grid[c.index()] == PinKind::Gd)
            .collect()
    }

    /// Gd flags in [`free_cells`] order.
    pub fn free_mask(&self) -> Vec<bool> {
        free_cells()
            .iter()
            .map(|c| self.grid[c.index()] == PinKind::Gd)
            .collect()
    }

    /// Sets a free cell to fuel or Gd.
    pub fn set(&mut self, c: Coord, kind: PinKind) -> Result<(), LatticeError> {
        if is_guide_tube(c) || kind == PinKind::GuideTube {
            return Err(LatticeError::NotFreeCell(c));
        }
        self.grid[c.index()] = kind;
        Ok(())
    }

    /// Image of the layout under a symmetry: `out[g(c)] = self[c]`.
    /// The guide-tube pattern is D4-closed, so the result is always valid.
    pub fn transform(&self, g: D4) -> Self {
        let mut grid = [PinKind::Fuel; CELLS];
        for c in Coord::all() {
            grid[g.apply(c).index()] = self.grid[c.index()];
        }
        LatticeLayout { grid }
    }

    pub fn is_d4_invariant(&self) -> bool {
        D4::ALL.iter().all(|&g| self.transform(g) == *self)
    }

    pub fn serialize(&self) -> TokenText {
        let mut text = String::with_capacity(TOKEN_TEXT_LEN);
        for row in self.grid.chunks(SIDE) {
            text.extend(row.iter().map(|k| k.token()));
            text.push('\n');
        }
        TokenText(text)
    }

    /// Parses token text. A missing final newline is tolerated.
    pub fn deserialize(text: &str) -> Result<Self, LatticeError> {
        for (position, ch) in text.char_indices() {
            if ch != '\n' && PinKind::from_token(ch).is_none() {
                return Err(LatticeError::BadCharacter {
                    position,
                    found: ch,
                });
            }
        }
        let body = text.strip_suffix('\n').unwrap_or(text);
        let lines: Vec<&str> = body.split('\n').collect();
        if lines.len() != SIDE {
            return Err(LatticeError::BadShape(format!(
                "expected {SIDE} rows, found {}",
                lines.len()
            )));
        }
        let mut grid = [[PinKind::Fuel; SIDE]; SIDE];
        for (r, line) in lines.iter().enumerate() {
            if line.len() != SIDE {
                return Err(LatticeError::BadShape(format!(
                    "row {r} has {} tokens, expected {SIDE}",
                    line.len()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                grid[r][c] = PinKind::from_token(ch).expect("characters checked above");
            }
        }
        LatticeLayout::from_grid(grid)
    }
}

impl fmt::Debug for LatticeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "LatticeLayout(gd={})", self.gd_count())?;
        f.write_str(self.serialize().as_str())
    }
}

impl FromStr for LatticeLayout {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LatticeLayout::deserialize(s)
    }
}

impl Serialize for LatticeLayout {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.serialize().as_str())
    }
}

impl<'de> Deserialize<'de> for LatticeLayout {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        LatticeLayout::deserialize(&text).map_err(serde::de::Error::custom)
    }
}

/// Forces every guide-tube cell to `GuideTube`, leaving all other cells as
/// given. A stray `GuideTube` token off the pattern becomes fuel.
pub fn apply_gt_correction(grid: [[PinKind; SIDE]; SIDE]) -> LatticeLayout {
    let mut flat = [PinKind::Fuel; CELLS];
    for c in Coord::all() {
        flat[c.index()] = if is_guide_tube(c) {
            PinKind::GuideTube
        } else {
            match grid[c.row()][c.col()] {
                PinKind::GuideTube => PinKind::Fuel,
                kind => kind,
            }
        };
    }
    LatticeLayout { grid: flat }
}

/// Conditioning prompt for a target (k, Fq, FdH) triple.
pub fn format_prompt(k: f64, fq: f64, fdh: f64) -> Result<String, LatticeError> {
    for (name, v) in [("k", k), ("fq", fq), ("fdh", fdh)] {
        if !v.is_finite() {
            return Err(LatticeError::NonFinite(name));
        }
    }
    Ok(format!(
        "Reactor Core Design (k={k:.5}, fq={fq:.4}, fdh={fdh:.4}):"
    ))
}

/// Draws `inventory` Gd cells uniformly without replacement from the free cells.
pub fn random_layout<R: Rng + ?Sized>(
    inventory: usize,
    rng: &mut R,
) -> Result<LatticeLayout, LatticeError> {
    if inventory > FREE_CELLS {
        return Err(LatticeError::InventoryOutOfRange(inventory));
    }
    let free = free_cells();
    let mut picks: Vec<usize> = index::sample(rng, FREE_CELLS, inventory).into_vec();
    picks.sort_unstable();
    LatticeLayout::from_gd_positions(picks.into_iter().map(|i| free[i]))
}

pub fn gd_count(layout: &LatticeLayout) -> usize {
    layout.gd_count()
}
