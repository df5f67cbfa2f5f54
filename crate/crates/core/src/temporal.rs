//! Publication-offset similarity curves.
//!
//! For every repeat `r`, each corpus year is downsampled to at most
//! `max_per_year` documents (years with fewer than `min_per_year` are
//! excluded) using the seed `year_seed(seed + r, year)`. For a target
//! document of year `y` and offset `o`, the document score is the mean of
//! its unmasked similarities to the sampled documents of year `y + o`,
//! itself excluded. Scores are averaged over target documents per offset,
//! then over repeats; the standard error is the sample standard deviation
//! across repeats divided by the square root of their number.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::{self, splitmix64};
use crate::similarity::{MaskPolicy, SimilarityMatrix};

pub const DEFAULT_WINDOW: i32 = 30;
pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_MIN_PER_YEAR: usize = 25;
pub const DEFAULT_MAX_PER_YEAR: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub min: usize,
    pub max: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            min: DEFAULT_MIN_PER_YEAR,
            max: DEFAULT_MAX_PER_YEAR,
        }
    }
}

impl Bounds {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min > max || max == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid per-year bounds [{min}, {max}]"
            )));
        }
        Ok(Bounds { min, max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CurveConfig {
    pub window: i32,
    pub repeats: usize,
    pub bounds: Bounds,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            window: DEFAULT_WINDOW,
            repeats: DEFAULT_REPEATS,
            bounds: Bounds::default(),
            seed: 42,
        }
    }
}

impl CurveConfig {
    fn validate(&self) -> Result<()> {
        if self.repeats < 2 {
            return Err(Error::InvalidArgument("repeats must be at least 2".into()));
        }
        if self.window < 1 {
            return Err(Error::InvalidArgument("window must be at least 1".into()));
        }
        Bounds::new(self.bounds.min, self.bounds.max).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum YearSet<T> {
    Excluded { size: usize },
    Kept(Vec<T>),
}

impl<T> YearSet<T> {
    pub fn kept(&self) -> Option<&[T]> {
        match self {
            YearSet::Kept(v) => Some(v),
            YearSet::Excluded { .. } => None,
        }
    }
}

/// Floors and caps one year's documents. Oversized years are sampled
/// uniformly without replacement; the kept items retain input order.
pub fn downsample_year<T: Clone>(items: &[T], bounds: Bounds, seed: u64) -> YearSet<T> {
    if items.len() < bounds.min {
        return YearSet::Excluded { size: items.len() };
    }
    if items.len() <= bounds.max {
        return YearSet::Kept(items.to_vec());
    }
    let mut pick = rng::sample_without_replacement(&mut rng::rng(seed), items.len(), bounds.max);
    pick.sort_unstable();
    YearSet::Kept(pick.into_iter().map(|i| items[i].clone()).collect())
}

/// Seed used to downsample `year` in a repeat whose seed is `repeat_seed`.
pub fn year_seed(repeat_seed: u64, year: i32) -> u64 {
    splitmix64(repeat_seed ^ (year as i64 as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn decade(year: i32) -> i32 {
    year.div_euclid(10) * 10
}

/// Matrix indices grouped by publication year, plus each index's author.
#[derive(Debug, Clone)]
pub struct YearIndex {
    pub years: Vec<i32>,
    pub by_year: BTreeMap<i32, Vec<usize>>,
    authors: Vec<String>,
}

impl YearIndex {
    pub fn new(s: &SimilarityMatrix, corpus: &Corpus) -> Result<Self> {
        let mut years = Vec::with_capacity(s.len());
        let mut authors = Vec::with_capacity(s.len());
        let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, id) in s.doc_ids().iter().enumerate() {
            let d = corpus.get(id).ok_or_else(|| Error::UnknownDoc(id.clone()))?;
            years.push(d.year);
            authors.push(d.author_id.clone());
            by_year.entry(d.year).or_default().push(i);
        }
        Ok(YearIndex {
            years,
            by_year,
            authors,
        })
    }

    /// Downsampled comparison sets of every year for one repeat seed.
    pub fn sample(&self, bounds: Bounds, repeat_seed: u64) -> BTreeMap<i32, YearSet<usize>> {
        self.by_year
            .iter()
            .map(|(&y, ids)| (y, downsample_year(ids, bounds, year_seed(repeat_seed, y))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetPoint {
    pub offset: i32,
    /// `None` when no repeat had a contributing pair at this offset.
    pub mean: Option<f64>,
    pub se: Option<f64>,
    /// Repeats that contributed; less than the configured count marks a
    /// partial offset.
    pub repeats_with_data: usize,
    /// Contributing pairs summed over repeats.
    pub n_pairs: usize,
}

impl OffsetPoint {
    pub fn is_partial(&self, repeats: usize) -> bool {
        self.repeats_with_data > 0 && self.repeats_with_data < repeats
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetCurve {
    pub window: i32,
    pub repeats: usize,
    pub bounds: Bounds,
    pub seed: u64,
    pub points: Vec<OffsetPoint>,
    pub target_count: usize,
    /// Contributing pairs whose documents share an author. Always 0 unless
    /// the matrix mask is wrong.
    pub same_author_pairs: usize,
}

impl OffsetCurve {
    pub fn point(&self, offset: i32) -> Option<&OffsetPoint> {
        self.points.get(usize::try_from(offset + self.window).ok()?)
    }

    /// Offset with the highest mean; ties go to the smallest offset.
    pub fn argmax(&self) -> Option<i32> {
        self.points
            .iter()
            .filter_map(|p| p.mean.map(|m| (p.offset, m)))
            .fold(None, |best: Option<(i32, f64)>, (o, m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((o, m)),
            })
            .map(|(o, _)| o)
    }

    /// CSV `offset,mean,se,n_pairs`; offsets without data are omitted.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "offset,mean,se,n_pairs")?;
        self.write_rows(w, None)
    }

    fn write_rows<W: Write>(&self, w: &mut W, series: Option<&str>) -> std::io::Result<()> {
        for p in &self.points {
            if let (Some(m), Some(se)) = (p.mean, p.se) {
                if let Some(s) = series {
                    write!(w, "{s},")?;
                }
                writeln!(w, "{},{},{},{}", p.offset, m, se, p.n_pairs)?;
            }
        }
        Ok(())
    }

    /// Run metadata: aggregation order, absent and partial offsets, audit.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "aggregation": "per-document mean over the downsampled year set, then mean over documents, then mean and standard error over repeats",
            "window": self.window,
            "repeats": self.repeats,
            "bounds": [self.bounds.min, self.bounds.max],
            "seed": self.seed,
            "targets": self.target_count,
            "absent_offsets": self.points.iter().filter(|p| p.mean.is_none()).map(|p| p.offset).collect::<Vec<_>>(),
            "partial_offsets": self.points.iter().filter(|p| p.is_partial(self.repeats)).map(|p| p.offset).collect::<Vec<_>>(),
            "same_author_pairs": self.same_author_pairs,
        })
    }
}

fn check_policy(s: &SimilarityMatrix) -> Result<()> {
    if s.policy() != MaskPolicy::SameAuthor {
        return Err(Error::InvalidArgument(
            "temporal analyses need a matrix built with the same-author mask".into(),
        ));
    }
    Ok(())
}

fn resolve(s: &SimilarityMatrix, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| s.index_of(id).ok_or_else(|| Error::UnknownDoc(id.clone())))
        .collect()
}

#[derive(Clone, Copy, Default)]
struct Cell {
    sum: f64,
    docs: usize,
    pairs: usize,
    same_author: usize,
}

/// Per-offset means of one repeat.
fn repeat_cells(
    s: &SimilarityMatrix,
    index: &YearIndex,
    targets: &[usize],
    samples: &BTreeMap<i32, YearSet<usize>>,
    window: i32,
) -> Vec<Cell> {
    let width = (2 * window + 1) as usize;
    let per_doc: Vec<Vec<Option<(f64, usize, usize)>>> = targets
        .par_iter()
        .map(|&i| {
            let y = index.years[i];
            (-window..=window)
                .map(|o| {
                    let set = samples.get(&(y + o))?.kept()?;
                    let (mut sum, mut n, mut same) = (0.0, 0usize, 0usize);
                    for &j in set {
                        if j == i {
                            continue;
                        }
                        if let Some(v) = s.get(i, j) {
                            sum += v;
                            n += 1;
                            if index.authors[i] == index.authors[j] {
                                same += 1;
                            }
                        }
                    }
                    (n > 0).then(|| (sum / n as f64, n, same))
                })
                .collect()
        })
        .collect();
    let mut cells = vec![Cell::default(); width];
    for doc in &per_doc {
        for (c, v) in cells.iter_mut().zip(doc) {
            if let Some((m, n, same)) = v {
                c.sum += m;
                c.docs += 1;
                c.pairs += n;
                c.same_author += same;
            }
        }
    }
    cells
}

/// Mean and standard error (sample std over `sqrt(k)`) of repeat values.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn curve_for_targets(
    s: &SimilarityMatrix,
    index: &YearIndex,
    targets_per_repeat: &[Vec<usize>],
    cfg: &CurveConfig,
) -> OffsetCurve {
    let w = cfg.window;
    let width = (2 * w + 1) as usize;
    let mut per_offset: Vec<Vec<f64>> = vec![Vec::new(); width];
    let mut pairs = vec![0usize; width];
    let mut same_author = 0;
    for (r, targets) in targets_per_repeat.iter().enumerate() {
        let samples = index.sample(cfg.bounds, cfg.seed.wrapping_add(r as u64));
        let cells = repeat_cells(s, index, targets, &samples, w);
        for (k, c) in cells.iter().enumerate() {
            if c.docs > 0 {
                per_offset[k].push(c.sum / c.docs as f64);
            }
            pairs[k] += c.pairs;
            same_author += c.same_author;
        }
    }
    let points = (0..width)
        .map(|k| {
            let vals = &per_offset[k];
            let (mean, se) = if vals.is_empty() {
                (None, None)
            } else {
                let (m, se) = mean_se(vals);
                (Some(m), Some(se))
            };
            OffsetPoint {
                offset: k as i32 - w,
                mean,
                se,
                repeats_with_data: vals.len(),
                n_pairs: pairs[k],
            }
        })
        .collect();
    OffsetCurve {
        window: w,
        repeats: cfg.repeats,
        bounds: cfg.bounds,
        seed: cfg.seed,
        points,
        target_count: targets_per_repeat.first().map_or(0, Vec::len),
        same_author_pairs: same_author,
    }
}

/// Similarity curve of `docs` against the corpus, by publication offset.
pub fn offset_curve(docs: &[String], s: &SimilarityMatrix, corpus: &Corpus, cfg: &CurveConfig) -> Result<OffsetCurve> {
    cfg.validate()?;
    check_policy(s)?;
    let index = YearIndex::new(s, corpus)?;
    let targets = resolve(s, docs)?;
    let per_repeat = vec![targets; cfg.repeats];
    Ok(curve_for_targets(s, &index, &per_repeat, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum YearExclusion {
    TooFew { size: usize },
    NoUnmaskedPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearPoint {
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearSimilarityProfile {
    pub doc_id: String,
    pub years: BTreeMap<i32, YearPoint>,
    pub excluded: BTreeMap<i32, YearExclusion>,
    pub same_author_pairs: usize,
}

impl YearSimilarityProfile {
    pub fn argmax(&self) -> Option<i32> {
        self.years
            .iter()
            .fold(None, |best: Option<(i32, f64)>, (&y, p)| match best {
                Some((_, m)) if m >= p.mean => best,
                _ => Some((y, p.mean)),
            })
            .map(|(y, _)| y)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "year,mean,n")?;
        for (y, p) in &self.years {
            writeln!(w, "{y},{},{}", p.mean, p.n)?;
        }
        Ok(())
    }
}

/// Similarity of one document to each calendar year's downsampled set,
/// using the first repeat's seeds (`year_seed(seed, year)`).
pub fn novel_trajectory(
    doc_id: &str,
    s: &SimilarityMatrix,
    corpus: &Corpus,
    bounds: Bounds,
    seed: u64,
) -> Result<YearSimilarityProfile> {
    check_policy(s)?;
    let i = s
        .index_of(doc_id)
        .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
    let index = YearIndex::new(s, corpus)?;
    let mut out = YearSimilarityProfile {
        doc_id: doc_id.to_string(),
        years: BTreeMap::new(),
        excluded: BTreeMap::new(),
        same_author_pairs: 0,
    };
    for (year, set) in index.sample(bounds, seed) {
        let Some(set) = set.kept() else {
            if let YearSet::Excluded { size } = set {
                out.excluded.insert(year, YearExclusion::TooFew { size });
            }
            continue;
        };
        let (mut sum, mut n) = (0.0, 0usize);
        for &j in set.iter().filter(|&&j| j != i) {
            if let Some(v) = s.get(i, j) {
                sum += v;
                n += 1;
                if index.authors[i] == index.authors[j] {
                    out.same_author_pairs += 1;
                }
            }
        }
        if n == 0 {
            out.excluded.insert(year, YearExclusion::NoUnmaskedPairs);
        } else {
            out.years.insert(
                year,
                YearPoint {
                    mean: sum / n as f64,
                    n,
                },
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub name: String,
    pub members: Vec<String>,
    /// Pool the matched comparison sample is drawn from.
    pub comparison: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub name: String,
    pub group: OffsetCurve,
    pub comparison: OffsetCurve,
    pub group_decades: BTreeMap<i32, usize>,
    /// Decade counts of the comparison sample drawn in each repeat.
    pub comparison_decades: Vec<BTreeMap<i32, usize>>,
}

impl GroupComparison {
    /// CSV `series,offset,mean,se,n_pairs` with series `group` and `comparison`.
    pub fn write_csv<W: Write>(&self, w: &mut W, group_label: &str, comparison_label: &str) -> std::io::Result<()> {
        writeln!(w, "series,offset,mean,se,n_pairs")?;
        self.group.write_rows(w, Some(group_label))?;
        self.comparison.write_rows(w, Some(comparison_label))
    }
}

/// Per-decade seed for the comparison draw of repeat `r`.
fn stratum_seed(seed: u64, repeat: usize, decade: i32) -> u64 {
    splitmix64(rng::stage_seed(seed, "stratify") ^ (repeat as u64) << 32 ^ decade as i64 as u64)
}

/// Comparison sample matching the members' decade counts exactly.
pub fn stratified_sample(member_years: &[i32], pool: &[(usize, i32)], seed: u64, repeat: usize) -> Result<Vec<usize>> {
    let mut need: BTreeMap<i32, usize> = BTreeMap::new();
    for &y in member_years {
        *need.entry(decade(y)).or_default() += 1;
    }
    let mut by_decade: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for &(i, y) in pool {
        by_decade.entry(decade(y)).or_default().push(i);
    }
    let mut out = Vec::with_capacity(member_years.len());
    for (&d, &k) in &need {
        let avail = by_decade.get(&d).map_or(&[][..], Vec::as_slice);
        if avail.len() < k {
            return Err(Error::InsufficientPool {
                decade: d,
                needed: k,
                available: avail.len(),
            });
        }
        let mut pick = rng::sample_without_replacement(&mut rng::rng(stratum_seed(seed, repeat, d)), avail.len(), k);
        pick.sort_unstable();
        out.extend(pick.into_iter().map(|p| avail[p]));
    }
    Ok(out)
}

/// Curves for a group and for a decade-matched comparison sample, redrawn
/// every repeat. Both curves share the year downsampling of each repeat.
pub fn stratified_compare(
    group: &GroupSpec,
    s: &SimilarityMatrix,
    corpus: &Corpus,
    cfg: &CurveConfig,
) -> Result<GroupComparison> {
    cfg.validate()?;
    check_policy(s)?;
    if group.members.is_empty() {
        return Err(Error::InvalidArgument(format!("group {:?} has no members", group.name)));
    }
    let index = YearIndex::new(s, corpus)?;
    let members = resolve(s, &group.members)?;
    let member_years: Vec<i32> = members.iter().map(|&i| index.years[i]).collect();
    let pool: Vec<(usize, i32)> = resolve(s, &group.comparison)?
        .into_iter()
        .map(|i| (i, index.years[i]))
        .collect();

    let mut samples = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        samples.push(stratified_sample(&member_years, &pool, cfg.seed, r)?);
    }
    let count = |idx: &[usize]| {
        let mut m: BTreeMap<i32, usize> = BTreeMap::new();
        for &i in idx {
            *m.entry(decade(index.years[i])).or_default() += 1;
        }
        m
    };
    let comparison_decades = samples.iter().map(|s| count(s)).collect();
    let group_curve = curve_for_targets(s, &index, &vec![members.clone(); cfg.repeats], cfg);
    let comparison_curve = curve_for_targets(s, &index, &samples, cfg);
    Ok(GroupComparison {
        name: group.name.clone(),
        group: group_curve,
        comparison: comparison_curve,
        group_decades: count(&members),
        comparison_decades,
    })
}
