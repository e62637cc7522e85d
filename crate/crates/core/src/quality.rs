//! Construction and enumeration of quality-vector sets.
//!
//! Risk-of-bias judgments put each study into a rating category per domain;
//! a cutoff policy maps categories to quality intervals; equal ratings tie
//! studies together into *equality blocks*. The resulting set of admissible
//! quality vectors is described symbolically by a [`QualitySetSpec`] —
//! blocks with interval bounds whose upper end may reference another block
//! (an order constraint `q_child <= q_parent`) — and discretized by
//! [`enumerate_quality_vectors`] into a finite, exactly deduplicated list.
//!
//! All constant bounds live on the 1/1000 lattice and simplex weights are
//! multiples of `1/m`, so convex combinations of extreme points live on the
//! `1/(1000 m)` lattice. Enumeration carries scaled integers end to end and
//! converts to `f64` only at the boundary, which makes deduplication exact
//! and the output order (lexicographic) reproducible.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QualityVector;

/// Upper limit on how many vectors one enumeration may produce.
const MAX_ENUMERATED: u128 = 10_000_000;
/// Upper limit on blocks for vertex enumeration (2^B assignments).
const MAX_VERTEX_BLOCKS: usize = 20;

/// Risk-of-bias rating categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Low,
    Unclear,
    High,
}

/// One study's ratings across the assessed domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoBStudy {
    pub name: String,
    /// Domain id (1..=6 in the classic tool) to rating.
    pub ratings: BTreeMap<u8, Rating>,
}

/// A complete risk-of-bias table, studies in data order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoBTable {
    pub studies: Vec<RoBStudy>,
}

impl RoBTable {
    /// Domain ids rated by the table (identical across studies once
    /// validated), ascending.
    pub fn domains(&self) -> Vec<u8> {
        self.studies
            .first()
            .map(|s| s.ratings.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.studies.is_empty() {
            return Err(Error::Quality("risk-of-bias table has no studies".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.studies {
            if s.name.is_empty() {
                return Err(Error::Quality(
                    "risk-of-bias table has an unnamed study".into(),
                ));
            }
            if !seen.insert(&s.name) {
                return Err(Error::Quality(format!(
                    "risk-of-bias table lists study {} twice",
                    s.name
                )));
            }
            if s.ratings.is_empty() {
                return Err(Error::Quality(format!("study {} rates no domains", s.name)));
            }
        }
        let reference: Vec<u8> = self.domains();
        for s in &self.studies[1..] {
            let keys: Vec<u8> = s.ratings.keys().copied().collect();
            if keys != reference {
                return Err(Error::Quality(format!(
                    "study {} rates domains {:?} but {} rates {:?}; every study must rate \
                     the same domains",
                    s.name, keys, self.studies[0].name, reference
                )));
            }
        }
        Ok(())
    }
}

/// Quality intervals assigned to the rating categories. Unclear studies get
/// the envelope `[high_risk.0, low_risk.1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoffPolicy {
    /// Interval for studies at low risk of bias.
    pub low_risk: (f64, f64),
    /// Interval for studies at high risk of bias.
    pub high_risk: (f64, f64),
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        Self {
            low_risk: (0.5, 0.95),
            high_risk: (0.1, 0.5),
        }
    }
}

impl CutoffPolicy {
    /// Interval for studies with an unclear rating: from the high-risk floor
    /// to the low-risk ceiling.
    pub fn unclear(&self) -> (f64, f64) {
        (self.high_risk.0, self.low_risk.1)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("low_risk", self.low_risk), ("high_risk", self.high_risk)] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::Quality(format!(
                    "{name} interval [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"
                )));
            }
            to_milli(lo)?;
            to_milli(hi)?;
        }
        if self.high_risk.0 > self.low_risk.0 || self.high_risk.1 > self.low_risk.1 {
            return Err(Error::Quality(format!(
                "high-risk interval [{}, {}] must sit at or below the low-risk interval \
                 [{}, {}]",
                self.high_risk.0, self.high_risk.1, self.low_risk.0, self.low_risk.1
            )));
        }
        Ok(())
    }
}

/// Upper bound of a block: a constant, or the (run-time) quality of another
/// block, encoding the order constraint `q_this <= q_parent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockBound {
    Const(f64),
    Block { block: usize },
}

/// One equality block: the listed studies share a single quality value
/// confined to `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Indices into the study list (data order).
    pub members: Vec<usize>,
    pub lower: f64,
    pub upper: BlockBound,
}

/// Symbolic description of a set of admissible quality vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySetSpec {
    pub n_studies: usize,
    pub blocks: Vec<Block>,
}

impl QualitySetSpec {
    /// Checks that the blocks partition the studies, bounds are ordered,
    /// constants sit on the 1/1000 lattice, and block references form a
    /// forest whose children never out-floor their parents (so the set is
    /// non-empty whatever value the parent takes).
    pub fn validate(&self) -> Result<()> {
        if self.n_studies == 0 {
            return Err(Error::Quality("spec covers no studies".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::Quality("spec has no blocks".into()));
        }
        let mut owner = vec![None::<usize>; self.n_studies];
        for (b, block) in self.blocks.iter().enumerate() {
            if block.members.is_empty() {
                return Err(Error::Quality(format!("block {b} has no members")));
            }
            for &s in &block.members {
                if s >= self.n_studies {
                    return Err(Error::Quality(format!(
                        "block {b} references study index {s}, but only {} studies exist",
                        self.n_studies
                    )));
                }
                if let Some(other) = owner[s] {
                    return Err(Error::Quality(format!(
                        "study index {s} appears in blocks {other} and {b}"
                    )));
                }
                owner[s] = Some(b);
            }
            if !(block.lower > 0.0 && block.lower <= 1.0) {
                return Err(Error::Quality(format!(
                    "block {b} lower bound {} outside (0, 1]",
                    block.lower
                )));
            }
            to_milli(block.lower)?;
            match block.upper {
                BlockBound::Const(u) => {
                    if !(u >= block.lower && u <= 1.0) {
                        return Err(Error::Quality(format!(
                            "block {b} bounds [{}, {u}] must satisfy lower <= upper <= 1",
                            block.lower
                        )));
                    }
                    to_milli(u)?;
                }
                BlockBound::Block { block: parent } => {
                    if parent >= self.blocks.len() {
                        return Err(Error::Quality(format!(
                            "block {b} references nonexistent parent block {parent}"
                        )));
                    }
                    if self.blocks[parent].lower < block.lower {
                        return Err(Error::Quality(format!(
                            "block {b} (lower {}) is bounded above by block {parent} whose \
                             lower bound {} is smaller; the set would be empty for some \
                             parent values",
                            block.lower, self.blocks[parent].lower
                        )));
                    }
                }
            }
        }
        if let Some(orphan) = owner.iter().position(|o| o.is_none()) {
            return Err(Error::Quality(format!(
                "study index {orphan} belongs to no block"
            )));
        }
        // Forest check: following parents from any block must terminate.
        for start in 0..self.blocks.len() {
            let mut hops = 0;
            let mut cur = start;
            while let BlockBound::Block { block: parent } = self.blocks[cur].upper {
                cur = parent;
                hops += 1;
                if hops > self.blocks.len() {
                    return Err(Error::Quality(format!(
                        "block references contain a cycle through block {start}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn has_block_refs(&self) -> bool {
        self.blocks
            .iter()
            .any(|b| matches!(b.upper, BlockBound::Block { .. }))
    }
}

/// Discretization parameters for [`enumerate_quality_vectors`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationConfig {
    /// Grid points per free block in the box regime (endpoints included).
    pub box_points_per_axis: usize,
    /// Simplex weight grid spacing; must equal `1/m` for an integer `m`.
    pub weight_spacing: f64,
    /// Grid points when a single block covers every study.
    pub singleton_points: usize,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        Self {
            box_points_per_axis: 10,
            weight_spacing: 0.1,
            singleton_points: 10,
        }
    }
}

impl EnumerationConfig {
    /// The integer `m` with `weight_spacing = 1/m`.
    pub fn weight_denominator(&self) -> Result<u32> {
        if !(self.weight_spacing > 0.0 && self.weight_spacing <= 1.0) {
            return Err(Error::Quality(format!(
                "weight spacing {} outside (0, 1]",
                self.weight_spacing
            )));
        }
        let recip = 1.0 / self.weight_spacing;
        let m = recip.round();
        if (recip - m).abs() > 1e-9 * m.max(1.0) {
            return Err(Error::Quality(format!(
                "weight spacing {} is not the reciprocal of an integer",
                self.weight_spacing
            )));
        }
        Ok(m as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.box_points_per_axis < 2 {
            return Err(Error::Quality(
                "box_points_per_axis must be at least 2".into(),
            ));
        }
        if self.singleton_points < 2 {
            return Err(Error::Quality("singleton_points must be at least 2".into()));
        }
        self.weight_denominator()?;
        Ok(())
    }
}

/// User-supplied constraint blocks for multi-domain selections, resolved by
/// study name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraConstraints {
    pub blocks: Vec<ConstraintBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBlock {
    pub studies: Vec<String>,
    pub lower: f64,
    pub upper: BlockBound,
}

/// Converts a lattice constant to integer thousandths, rejecting values off
/// the 1/1000 grid (exact deduplication depends on it).
pub(crate) fn to_milli(x: f64) -> Result<i64> {
    let scaled = x * 1000.0;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-6 {
        return Err(Error::Quality(format!(
            "bound {x} is not a multiple of 0.001; quality bounds must sit on the 1/1000 \
             lattice"
        )));
    }
    Ok(rounded as i64)
}

/// Builds the quality-set description induced by the risk-of-bias table.
///
/// For a single domain, studies group by rating: the low-risk studies form
/// one block on the policy's low interval, high-risk studies one block on
/// the high interval, and each unclear study becomes its own block bounded
/// below by the high-risk floor and above by the low-risk block when one
/// exists (ordering it under the low-risk studies), otherwise by the
/// unclear ceiling. Multi-domain selections carry no built-in scoring rule
/// and require explicit `extra` constraint blocks, which are used verbatim.
pub fn build_set_spec(
    rob: &RoBTable,
    domain_selection: &[u8],
    policy: &CutoffPolicy,
    extra: Option<&ExtraConstraints>,
) -> Result<QualitySetSpec> {
    rob.validate()?;
    policy.validate()?;
    let n_studies = rob.studies.len();

    if domain_selection.is_empty() {
        return Err(Error::Quality("domain selection is empty".into()));
    }
    let available = rob.domains();
    for d in domain_selection {
        if !available.contains(d) {
            return Err(Error::Quality(format!(
                "domain {d} is not rated by the table (available: {available:?})"
            )));
        }
    }

    if domain_selection.len() > 1 {
        let extra = extra.ok_or_else(|| {
            Error::Quality(
                "combining multiple domains requires explicit constraint blocks; no \
                 scoring rule is built in"
                    .into(),
            )
        })?;
        let spec = resolve_constraints(rob, extra)?;
        spec.validate()?;
        return Ok(spec);
    }

    let domain = domain_selection[0];
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut unclear = Vec::new();
    for (i, s) in rob.studies.iter().enumerate() {
        match s.ratings[&domain] {
            Rating::Low => low.push(i),
            Rating::High => high.push(i),
            Rating::Unclear => unclear.push(i),
        }
    }

    let mut blocks = Vec::new();
    let mut low_block = None;
    if !low.is_empty() {
        low_block = Some(blocks.len());
        blocks.push(Block {
            members: low,
            lower: policy.low_risk.0,
            upper: BlockBound::Const(policy.low_risk.1),
        });
    }
    if !high.is_empty() {
        blocks.push(Block {
            members: high,
            lower: policy.high_risk.0,
            upper: BlockBound::Const(policy.high_risk.1),
        });
    }
    let (unclear_lo, unclear_hi) = policy.unclear();
    for i in unclear {
        blocks.push(Block {
            members: vec![i],
            lower: unclear_lo,
            upper: match low_block {
                Some(parent) => BlockBound::Block { block: parent },
                None => BlockBound::Const(unclear_hi),
            },
        });
    }

    let spec = QualitySetSpec { n_studies, blocks };
    spec.validate()?;
    Ok(spec)
}

fn resolve_constraints(rob: &RoBTable, extra: &ExtraConstraints) -> Result<QualitySetSpec> {
    let index_of: BTreeMap<&str, usize> = rob
        .studies
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();
    let mut blocks = Vec::with_capacity(extra.blocks.len());
    for cb in &extra.blocks {
        let mut members = Vec::with_capacity(cb.studies.len());
        for name in &cb.studies {
            let &i = index_of.get(name.as_str()).ok_or_else(|| {
                Error::Quality(format!(
                    "constraint block names unknown study {name}; known studies: {:?}",
                    rob.studies.iter().map(|s| &s.name).collect::<Vec<_>>()
                ))
            })?;
            members.push(i);
        }
        blocks.push(Block {
            members,
            lower: cb.lower,
            upper: cb.upper,
        });
    }
    Ok(QualitySetSpec {
        n_studies: rob.studies.len(),
        blocks,
    })
}

/// Per-block values of the spec's constant data, in thousandths.
struct MilliSpec {
    lower: Vec<i64>,
    upper: Vec<MilliBound>,
}

enum MilliBound {
    Const(i64),
    Parent(usize),
}

fn milli_spec(spec: &QualitySetSpec) -> Result<MilliSpec> {
    let mut lower = Vec::with_capacity(spec.blocks.len());
    let mut upper = Vec::with_capacity(spec.blocks.len());
    for b in &spec.blocks {
        lower.push(to_milli(b.lower)?);
        upper.push(match b.upper {
            BlockBound::Const(u) => MilliBound::Const(to_milli(u)?),
            BlockBound::Block { block } => MilliBound::Parent(block),
        });
    }
    Ok(MilliSpec { lower, upper })
}

fn resolve_vertex(block: usize, mask: u32, milli: &MilliSpec, memo: &mut [Option<i64>]) -> i64 {
    if let Some(v) = memo[block] {
        return v;
    }
    let v = if mask & (1 << block) == 0 {
        milli.lower[block]
    } else {
        match milli.upper[block] {
            MilliBound::Const(u) => u,
            MilliBound::Parent(p) => resolve_vertex(p, mask, milli, memo),
        }
    };
    memo[block] = Some(v);
    v
}

fn extreme_points_milli(spec: &QualitySetSpec) -> Result<Vec<Vec<i64>>> {
    let n_blocks = spec.blocks.len();
    if n_blocks > MAX_VERTEX_BLOCKS {
        return Err(Error::Quality(format!(
            "vertex enumeration over {n_blocks} blocks exceeds the supported maximum of \
             {MAX_VERTEX_BLOCKS}"
        )));
    }
    let milli = milli_spec(spec)?;
    let mut set: BTreeSet<Vec<i64>> = BTreeSet::new();
    for mask in 0..(1u32 << n_blocks) {
        let mut memo = vec![None; n_blocks];
        let mut q = vec![0i64; spec.n_studies];
        for (b, block) in spec.blocks.iter().enumerate() {
            let v = resolve_vertex(b, mask, &milli, &mut memo);
            for &s in &block.members {
                q[s] = v;
            }
        }
        set.insert(q);
    }
    Ok(set.into_iter().collect())
}

/// The vertices of the quality set: every assignment that puts each block at
/// its lower bound or at its (possibly parent-valued) upper bound, parents
/// resolved first, deduplicated exactly, in lexicographic order.
pub fn extreme_points(spec: &QualitySetSpec) -> Result<Vec<QualityVector>> {
    spec.validate()?;
    Ok(extreme_points_milli(spec)?
        .into_iter()
        .map(|v| QualityVector {
            q: v.into_iter().map(|x| x as f64 / 1000.0).collect(),
        })
        .collect())
}

/// All weight vectors with entries in `{0, 1/m, 2/m, ..., 1}` summing to 1,
/// returned as integer numerators over `m`, lexicographically ascending.
pub fn simplex_weights(n_vertices: usize, m: u32) -> Vec<Vec<u32>> {
    if n_vertices == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; n_vertices];
    fill_weights(0, m, &mut cur, &mut out);
    out
}

fn fill_weights(pos: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for k in 0..=remaining {
        cur[pos] = k;
        fill_weights(pos + 1, remaining - k, cur, out);
    }
}

/// Number of compositions of `m` into `n` non-negative parts,
/// `C(m + n - 1, n - 1)`.
fn composition_count(n_vertices: usize, m: u32) -> Option<u128> {
    let n = n_vertices as u128;
    let m = m as u128;
    // C(m + n - 1, n - 1) with incremental exact division.
    let k = (n - 1).min(m);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num.checked_mul(m + n - 1 - i)?;
        num /= i + 1;
    }
    Some(num)
}

/// Equally spaced points on `[lo, hi]` including both endpoints (the upper
/// endpoint is emitted exactly). Degenerate intervals yield a single point.
fn interval_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let n1 = (points - 1) as f64;
    let mut out = Vec::with_capacity(points);
    for t in 0..points {
        let v = if t + 1 == points {
            hi
        } else {
            lo + t as f64 * (hi - lo) / n1
        };
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

/// Discretizes the quality set into a finite, deduplicated, lexicographically
/// ordered list of vectors.
///
/// Three regimes:
/// * a single block covering every study: `singleton_points` equally spaced
///   values on its interval;
/// * independent blocks with constant bounds (a box): the Cartesian product
///   of per-block grids with `box_points_per_axis` points each;
/// * anything with order constraints: convex combinations of the extreme
///   points under the `1/m`-spaced simplex weight grid, accumulated in
///   integers over `1000 m` and deduplicated exactly.
pub fn enumerate_quality_vectors(
    spec: &QualitySetSpec,
    config: &EnumerationConfig,
) -> Result<Vec<QualityVector>> {
    spec.validate()?;
    config.validate()?;

    // Regime: one block, every study tied to the same value.
    if spec.blocks.len() == 1 {
        let block = &spec.blocks[0];
        let hi = match block.upper {
            BlockBound::Const(u) => u,
            // Validation rejects a self-reference, and there is no other
            // block to reference.
            BlockBound::Block { .. } => unreachable!("single block cannot reference a parent"),
        };
        return Ok(interval_grid(block.lower, hi, config.singleton_points)
            .into_iter()
            .map(|v| QualityVector {
                q: vec![v; spec.n_studies],
            })
            .collect());
    }

    // Regime: box — independent per-block grids.
    if !spec.has_block_refs() {
        let axes: Vec<Vec<f64>> = spec
            .blocks
            .iter()
            .map(|b| {
                let hi = match b.upper {
                    BlockBound::Const(u) => u,
                    BlockBound::Block { .. } => unreachable!("checked by has_block_refs"),
                };
                interval_grid(b.lower, hi, config.box_points_per_axis)
            })
            .collect();
        let mut total: u128 = 1;
        for axis in &axes {
            total = total.saturating_mul(axis.len() as u128);
        }
        if total > MAX_ENUMERATED {
            return Err(Error::Quality(format!(
                "box enumeration would produce {total} vectors (limit {MAX_ENUMERATED})"
            )));
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut idx = vec![0usize; axes.len()];
        loop {
            let mut q = vec![0f64; spec.n_studies];
            for (b, block) in spec.blocks.iter().enumerate() {
                for &s in &block.members {
                    q[s] = axes[b][idx[b]];
                }
            }
            out.push(QualityVector { q });
            // Odometer increment, last axis fastest (lexicographic order
            // when blocks are listed in study order).
            let mut pos = axes.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < axes[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }

    // Regime: order constraints — gridded convex combinations of vertices.
    let vertices = extreme_points_milli(spec)?;
    let m = config.weight_denominator()?;
    let n_combos = composition_count(vertices.len(), m)
        .filter(|&c| c <= MAX_ENUMERATED)
        .ok_or_else(|| {
            Error::Quality(format!(
                "weight grid over {} vertices at spacing 1/{m} is too large",
                vertices.len()
            ))
        })?;
    let mut set: BTreeSet<Vec<i64>> = BTreeSet::new();
    let mut weights = vec![0u32; vertices.len()];
    accumulate_combinations(&vertices, m, 0, m, &mut weights, &mut set);
    debug_assert!(set.len() as u128 <= n_combos);
    let denom = 1000.0 * m as f64;
    Ok(set
        .into_iter()
        .map(|nums| QualityVector {
            q: nums.into_iter().map(|x| x as f64 / denom).collect(),
        })
        .collect())
}

/// Walks the composition tree and inserts each convex combination's integer
/// numerators (over `1000 m`) into the dedup set.
fn accumulate_combinations(
    vertices: &[Vec<i64>],
    m: u32,
    pos: usize,
    remaining: u32,
    weights: &mut Vec<u32>,
    set: &mut BTreeSet<Vec<i64>>,
) {
    if pos + 1 == vertices.len() {
        weights[pos] = remaining;
        let dim = vertices[0].len();
        let mut nums = vec![0i64; dim];
        for (w, v) in weights.iter().zip(vertices) {
            if *w == 0 {
                continue;
            }
            for (n, &x) in nums.iter_mut().zip(v) {
                *n += *w as i64 * x;
            }
        }
        set.insert(nums);
        return;
    }
    for k in 0..=remaining {
        weights[pos] = k;
        accumulate_combinations(vertices, m, pos + 1, remaining - k, weights, set);
    }
}
