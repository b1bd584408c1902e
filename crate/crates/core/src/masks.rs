//! Subsampling index sets and spatial keep-masks.
//!
//! [`subsample_indices`] draws `floor(n * p)` distinct indices by sorting
//! i.i.d. uniform noise and keeping the head of the permutation. The
//! structured patterns of [`PatternKind`] are built on top of it and finished
//! with a random toroidal shift.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_keep_prob, Error, Result};
use crate::rng::RngStream;

/// `floor(n * p)` with the truncation semantics of `int(n * p)`.
pub fn kept_count(n: usize, p: f64) -> usize {
    (n as f64 * p) as usize
}

/// Ordered, duplicate-free subset of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    kept: Vec<usize>,
    n: usize,
}

impl IndexSet {
    /// Builds a set from explicit indices, validating range and uniqueness.
    pub fn new(kept: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &kept {
            if i >= n || seen[i] {
                return Err(Error::InvalidInput(format!(
                    "index {i} is out of range or repeated for length {n}"
                )));
            }
            seen[i] = true;
        }
        Ok(Self { kept, n })
    }

    /// All indices `0..n` in ascending order.
    pub fn full(n: usize) -> Self {
        Self {
            kept: (0..n).collect(),
            n,
        }
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Length of the source vector.
    pub fn source_len(&self) -> usize {
        self.n
    }

    /// Dense indicator over `0..n`.
    pub fn to_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n];
        for &i in &self.kept {
            flags[i] = true;
        }
        flags
    }

    /// Gathers `values[i]` for every kept `i`, in kept order.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&i| values[i]).collect()
    }
}

/// Draws `floor(n * p)` distinct indices uniformly at random.
///
/// Indices come out in the order of the noise permutation, not sorted.
pub fn subsample_indices(n: usize, p: f64, rng: &mut RngStream) -> Result<IndexSet> {
    check_keep_prob(p)?;
    let k = kept_count(n, p);
    if k == 0 {
        return Err(Error::EmptySubsample { n, p });
    }
    let mut g = rng.next_substream().generator();
    Ok(IndexSet {
        kept: noise_argsort_head(n, k, &mut g),
        n,
    })
}

fn noise_argsort_head(n: usize, k: usize, g: &mut impl Rng) -> Vec<usize> {
    let noise: Vec<f64> = (0..n).map(|_| g.random()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let by_noise = |a: &usize, b: &usize| noise[*a].total_cmp(&noise[*b]).then(a.cmp(b));
    if k < n {
        order.select_nth_unstable_by(k, by_noise);
        order.truncate(k);
    }
    order.sort_unstable_by(by_noise);
    order
}

/// Whether a mask is reused across channels or drawn per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelMode {
    #[default]
    Shared,
    Independent,
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::Shared => "shared",
            ChannelMode::Independent => "independent",
        })
    }
}

impl FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(ChannelMode::Shared),
            "independent" => Ok(ChannelMode::Independent),
            other => Err(Error::InvalidConfig(format!("unknown channel mode `{other}`"))),
        }
    }
}

/// Square boolean keep-mask over an `l x l` field, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepMask {
    side: usize,
    cells: Vec<bool>,
}

impl KeepMask {
    pub fn new(side: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != side * side {
            return Err(Error::ShapeMismatch {
                expected: vec![side, side],
                actual: vec![cells.len()],
            });
        }
        Ok(Self { side, cells })
    }

    pub fn from_index_set(side: usize, set: &IndexSet) -> Result<Self> {
        Self::new(side, set.to_flags())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.cells[y * self.side + x]
    }

    pub fn count_kept(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.count_kept() as f64 / self.cells.len() as f64
    }

    /// Kept cells as an ascending [`IndexSet`] over the flattened field.
    pub fn to_index_set(&self) -> IndexSet {
        IndexSet {
            kept: (0..self.cells.len()).filter(|&i| self.cells[i]).collect(),
            n: self.cells.len(),
        }
    }

    /// Plain PGM (P2): 255 for kept cells, 0 for dropped.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.side, self.side);
        for row in self.cells.chunks(self.side) {
            let line: Vec<&str> = row.iter().map(|&c| if c { "255" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses a square P2 image written by [`Self::to_pgm`]; nonzero is kept.
    pub fn from_pgm(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("malformed PGM: {msg}"));
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("P2") {
            return Err(bad("missing P2 magic"));
        }
        let mut num = || -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| bad("truncated"))?
                .parse()
                .map_err(|_| bad("non-numeric token"))
        };
        let (w, h, _max) = (num()?, num()?, num()?);
        if w != h {
            return Err(bad("mask must be square"));
        }
        let cells = (0..w * h).map(|_| num().map(|v| v > 0)).collect::<Result<_>>()?;
        Self::new(w, cells)
    }
}

/// Toroidal translation: the cell at `(y, x)` moves to `(y + dy, x + dx) mod l`.
pub fn circular_shift(mask: &KeepMask, dy: i64, dx: i64) -> KeepMask {
    let l = mask.side;
    let li = l as i64;
    let oy = dy.rem_euclid(li) as usize;
    let ox = dx.rem_euclid(li) as usize;
    let mut cells = vec![false; l * l];
    for y in 0..l {
        let ty = (y + oy) % l;
        for x in 0..l {
            cells[ty * l + (x + ox) % l] = mask.cells[y * l + x];
        }
    }
    KeepMask { side: l, cells }
}

/// Subsampling geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Unrestricted,
    Block,
    Grid,
    Uniform,
    Duplication,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Unrestricted => "unrestricted",
            PatternKind::Block => "block",
            PatternKind::Grid => "grid",
            PatternKind::Uniform => "uniform",
            PatternKind::Duplication => "duplication",
        })
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unrestricted" => PatternKind::Unrestricted,
            "block" => PatternKind::Block,
            "grid" => PatternKind::Grid,
            "uniform" => PatternKind::Uniform,
            "duplication" => PatternKind::Duplication,
            other => return Err(Error::InvalidConfig(format!("unknown pattern kind `{other}`"))),
        })
    }
}

/// Pattern kind, factor `s` and channel mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Factor `s`; ignored for [`PatternKind::Unrestricted`].
    pub factor: usize,
    pub channel_mode: ChannelMode,
}

impl PatternSpec {
    pub fn new(kind: PatternKind, factor: usize) -> Self {
        Self {
            kind,
            factor,
            channel_mode: ChannelMode::Shared,
        }
    }

    pub fn unrestricted() -> Self {
        Self::new(PatternKind::Unrestricted, 1)
    }

    pub fn with_channel_mode(mut self, mode: ChannelMode) -> Self {
        self.channel_mode = mode;
        self
    }

    /// Checks the geometric preconditions for an `l x l` field at keep prob `p`.
    pub fn validate(&self, l: usize, p: f64) -> Result<()> {
        check_keep_prob(p)?;
        if l == 0 {
            return Err(Error::InvalidPattern("side length must be positive".into()));
        }
        let s = self.factor;
        let total = kept_count(l * l, p);
        if total == 0 {
            return Err(Error::EmptySubsample { n: l * l, p });
        }
        if self.kind == PatternKind::Unrestricted {
            return Ok(());
        }
        if s == 0 || s > l || l % s != 0 {
            return Err(Error::InvalidPattern(format!(
                "factor s = {s} must divide side length l = {l}"
            )));
        }
        let blocks = (l / s) * (l / s);
        let produced = match self.kind {
            PatternKind::Unrestricted => unreachable!(),
            PatternKind::Block => {
                let k = kept_count(blocks, p);
                if k == 0 {
                    return Err(Error::EmptySubsample { n: blocks, p });
                }
                k * s * s
            }
            PatternKind::Grid => {
                if p != 0.5 {
                    return Err(Error::UnsupportedConfiguration(format!(
                        "grid pattern is defined only for p = 0.5, got {p}"
                    )));
                }
                if (l / s) % 2 != 0 {
                    return Err(Error::InvalidPattern(format!(
                        "grid pattern needs an even number of tiles per side, l/s = {}",
                        l / s
                    )));
                }
                blocks / 2 * s * s
            }
            PatternKind::Uniform | PatternKind::Duplication => {
                if s == 1 {
                    return Err(Error::InvalidPattern(format!(
                        "s = 1 is inapplicable for the {} pattern",
                        self.kind
                    )));
                }
                let k = kept_count(s * s, p);
                if k == 0 {
                    return Err(Error::EmptySubsample { n: s * s, p });
                }
                k * blocks
            }
        };
        if produced != total {
            return Err(Error::InvalidPattern(format!(
                "{} pattern with s = {s} keeps {produced} cells, not floor(l^2 p) = {total}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Pattern before the random shift.
pub fn pattern_template(spec: &PatternSpec, l: usize, p: f64, rng: &mut RngStream) -> Result<KeepMask> {
    spec.validate(l, p)?;
    let mut g = rng.next_substream().generator();
    Ok(build_template(spec, l, p, &mut g))
}

fn build_template(spec: &PatternSpec, l: usize, p: f64, g: &mut impl Rng) -> KeepMask {
    let s = spec.factor;
    let mut cells = vec![false; l * l];
    match spec.kind {
        PatternKind::Unrestricted => {
            for i in noise_argsort_head(l * l, kept_count(l * l, p), g) {
                cells[i] = true;
            }
        }
        PatternKind::Block => {
            let nb = l / s;
            for b in noise_argsort_head(nb * nb, kept_count(nb * nb, p), g) {
                let (by, bx) = (b / nb, b % nb);
                for y in by * s..(by + 1) * s {
                    for x in bx * s..(bx + 1) * s {
                        cells[y * l + x] = true;
                    }
                }
            }
        }
        PatternKind::Grid => {
            for y in 0..l {
                for x in 0..l {
                    cells[y * l + x] = (y / s + x / s) % 2 == 0;
                }
            }
        }
        PatternKind::Uniform => {
            let nb = l / s;
            let k = kept_count(s * s, p);
            for by in 0..nb {
                for bx in 0..nb {
                    for i in noise_argsort_head(s * s, k, g) {
                        cells[(by * s + i / s) * l + bx * s + i % s] = true;
                    }
                }
            }
        }
        PatternKind::Duplication => {
            let mut template = vec![false; s * s];
            for i in noise_argsort_head(s * s, kept_count(s * s, p), g) {
                template[i] = true;
            }
            for y in 0..l {
                for x in 0..l {
                    cells[y * l + x] = template[(y % s) * s + x % s];
                }
            }
        }
    }
    KeepMask { side: l, cells }
}

/// Draws one pattern realization followed by a uniform circular shift in `[0, l)^2`.
pub fn make_pattern_mask(spec: &PatternSpec, l: usize, p: f64, rng: &mut RngStream) -> Result<KeepMask> {
    spec.validate(l, p)?;
    let mut g = rng.next_substream().generator();
    let template = build_template(spec, l, p, &mut g);
    let dy = g.random_range(0..l) as i64;
    let dx = g.random_range(0..l) as i64;
    Ok(circular_shift(&template, dy, dx))
}

/// Per-channel masks: `mask` repeated in shared mode, a fresh draw of the
/// same pattern for every further channel in independent mode.
pub fn broadcast_mask(
    mask: &KeepMask,
    spec: &PatternSpec,
    p: f64,
    n_channels: usize,
    rng: &mut RngStream,
) -> Result<Vec<KeepMask>> {
    match spec.channel_mode {
        ChannelMode::Shared => Ok(vec![mask.clone(); n_channels]),
        ChannelMode::Independent => {
            let mut out = Vec::with_capacity(n_channels);
            if n_channels > 0 {
                out.push(mask.clone());
            }
            for _ in 1..n_channels {
                out.push(make_pattern_mask(spec, mask.side, p, rng)?);
            }
            Ok(out)
        }
    }
}
