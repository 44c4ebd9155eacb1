//! The grid pointing game: how much positive attribution lands in the cell
//! that holds the explained class.

use std::fmt::Write as _;
use std::thread;

use crate::data::GridImage;
use crate::error::{Error, Result};
use crate::explain::{AttributionMethod, Explainable};
use crate::model::Model;
use crate::tensor::Tensor;

/// Fraction of pixels kept by the top-n variant.
pub const DEFAULT_TOP_FRACTION: f64 = 0.025;

/// Positive mass inside cell `cell` over positive mass of the whole map;
/// an all-nonpositive map scores 0.
pub fn localisation_score(attribution: &Tensor, grid: &GridImage, cell: usize) -> Result<f64> {
    if attribution.dims() != [grid.height(), grid.width()] {
        return Err(Error::shape(
            "localisation_score",
            format!("map {:?} vs grid {}x{}", attribution.shape(), grid.height(), grid.width()),
        ));
    }
    let c = grid
        .cells
        .get(cell)
        .ok_or_else(|| Error::InvalidArgument(format!("cell {cell} of {}", grid.cells.len())))?;
    let w = grid.width();
    let (y0, x0) = (c.row * grid.cell_h, c.col * grid.cell_w);
    let (mut inside, mut total) = (0.0f64, 0.0f64);
    for (i, &v) in attribution.data().iter().enumerate() {
        if v > 0.0 {
            let (y, x) = (i / w, i % w);
            total += v as f64;
            if (y0..y0 + grid.cell_h).contains(&y) && (x0..x0 + grid.cell_w).contains(&x) {
                inside += v as f64;
            }
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}

/// 3x3 mean filter with zero padding.
pub fn smooth3(map: &Tensor) -> Result<Tensor> {
    let d = map.dims();
    if d.len() != 2 {
        return Err(Error::shape("smooth3", format!("{:?}", map.shape())));
    }
    let (h, w) = (d[0] as isize, d[1] as isize);
    let src = map.data();
    Tensor::from_fn(d.to_vec(), |i| {
        let (y, x) = ((i as isize) / w, (i as isize) % w);
        let mut acc = 0.0f32;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (yy, xx) = (y + dy, x + dx);
                if yy >= 0 && xx >= 0 && yy < h && xx < w {
                    acc += src[(yy * w + xx) as usize];
                }
            }
        }
        acc / 9.0
    })
}

/// Keeps the `n` largest positive values (earlier pixels win ties) and
/// zeroes the rest.
pub fn keep_top_n(map: &Tensor, n: usize) -> Result<Tensor> {
    let mut idx: Vec<usize> = (0..map.numel()).filter(|&i| map.data()[i] > 0.0).collect();
    if idx.len() <= n {
        return map.map("top_n", |v| if v > 0.0 { v } else { 0.0 });
    }
    idx.sort_by(|&a, &b| map.data()[b].total_cmp(&map.data()[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; map.numel()];
    for &i in &idx[..n] {
        out[i] = map.data()[i];
    }
    Tensor::new(map.dims().to_vec(), out)
}

/// Number of pixels the top-n variant keeps for a map of `pixels` pixels.
pub fn top_count(fraction: f64, pixels: usize) -> usize {
    ((fraction * pixels as f64).ceil() as usize).clamp(1, pixels.max(1))
}

#[derive(Clone, Debug)]
pub struct GameOptions {
    /// Fraction of pixels for the top-n variant; `None` skips it.
    pub top_n: Option<f64>,
    pub smoothing: bool,
    /// Evaluate the model on cell-sized windows at half-cell stride.
    pub sliding_window: bool,
    pub threads: usize,
}

impl Default for GameOptions {
    fn default() -> Self {
        GameOptions {
            top_n: None,
            smoothing: true,
            sliding_window: false,
            threads: thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub method: String,
    pub grid_id: usize,
    pub cell_class: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalisationResult {
    pub rows: Vec<ScoreRow>,
    pub warnings: Vec<String>,
}

/// Name under which top-n scores of `method` are reported.
pub fn top_n_name(method: &str) -> String {
    format!("{method}@top")
}

impl LocalisationResult {
    pub fn scores(&self, method: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method).map(|r| r.score).collect()
    }

    pub fn mean(&self, method: &str) -> Option<f64> {
        let s = self.scores(method);
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    }

    /// Per-method statistics in first-appearance order.
    pub fn summary(&self) -> Vec<MethodSummary> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.method.as_str()) {
                names.push(&r.method);
            }
        }
        names
            .into_iter()
            .map(|m| {
                let mut s = self.scores(m);
                s.sort_by(f64::total_cmp);
                let q = |p: f64| {
                    let pos = p * (s.len() - 1) as f64;
                    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
                    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
                };
                MethodSummary {
                    method: m.to_string(),
                    mean: s.iter().sum::<f64>() / s.len() as f64,
                    q1: q(0.25),
                    median: q(0.5),
                    q3: q(0.75),
                    count: s.len(),
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,grid_id,cell_class,score\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.method, r.grid_id, r.cell_class, r.score).unwrap();
        }
        out
    }

    /// Parses the output of [`LocalisationResult::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("method,grid_id,cell_class,score") {
            return Err(Error::Format("missing CSV header".into()));
        }
        let bad = |l: &str| Error::Format(format!("bad CSV row `{l}`"));
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 4 {
                    return Err(bad(l));
                }
                Ok(ScoreRow {
                    method: f[0].to_string(),
                    grid_id: f[1].parse().map_err(|_| bad(l))?,
                    cell_class: f[2].parse().map_err(|_| bad(l))?,
                    score: f[3].parse().map_err(|_| bad(l))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LocalisationResult { rows, warnings: Vec::new() })
    }
}

/// Whether a model only accepts its configured spatial size.
pub fn fixed_input_size(model: &Model) -> bool {
    model.layers().iter().any(|l| l.kind() == "tokens")
}

/// Attribution maps over `image` computed on `window`-sized crops at
/// `stride`, summed where windows overlap.
pub fn windowed_attribution(
    method: &dyn AttributionMethod,
    model: &dyn Explainable,
    image: &Tensor,
    classes: &[usize],
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<Vec<Tensor>> {
    let d = image.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let (wh, ww) = window;
    if wh > h || ww > w || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::InvalidArgument(format!("window {window:?} / stride {stride:?} on {h}x{w}")));
    }
    let mut acc = vec![vec![0.0f32; h * w]; classes.len()];
    let mut y0 = 0;
    loop {
        let mut x0 = 0;
        loop {
            let crop = Tensor::from_fn(vec![c, wh, ww], |i| {
                let (ch, r) = (i / (wh * ww), i % (wh * ww));
                image.data()[ch * h * w + (y0 + r / ww) * w + x0 + r % ww]
            })?;
            let maps = method.attribute(model, &crop, classes)?;
            for (a, m) in acc.iter_mut().zip(&maps) {
                for (i, &v) in m.data().iter().enumerate() {
                    a[(y0 + i / ww) * w + x0 + i % ww] += v;
                }
            }
            if x0 + ww >= w {
                break;
            }
            x0 = (x0 + stride.1).min(w - ww);
        }
        if y0 + wh >= h {
            break;
        }
        y0 = (y0 + stride.0).min(h - wh);
    }
    acc.into_iter().map(|a| Tensor::new(vec![h, w], a)).collect()
}

fn score_grid(
    model: &Model,
    methods: &[&dyn AttributionMethod],
    grid: &GridImage,
    grid_id: usize,
    opts: &GameOptions,
    windowed: bool,
) -> Result<Vec<ScoreRow>> {
    let x = model.encode(&grid.image)?;
    let classes: Vec<usize> = grid.cells.iter().map(|c| c.class).collect();
    let mut rows = Vec::new();
    for method in methods {
        let maps = if windowed {
            let win = (grid.cell_h, grid.cell_w);
            let stride = ((grid.cell_h / 2).max(1), (grid.cell_w / 2).max(1));
            windowed_attribution(*method, model, &x, &classes, win, stride)?
        } else {
            method.attribute(model, &x, &classes)?
        };
        let mut top_rows = Vec::new();
        for (k, map) in maps.iter().enumerate() {
            let map = if opts.smoothing { smooth3(map)? } else { map.clone() };
            rows.push(ScoreRow {
                method: method.name().to_string(),
                grid_id,
                cell_class: classes[k],
                score: localisation_score(&map, grid, k)?,
            });
            if let Some(f) = opts.top_n {
                let kept = keep_top_n(&map, top_count(f, map.numel()))?;
                top_rows.push(ScoreRow {
                    method: top_n_name(method.name()),
                    grid_id,
                    cell_class: classes[k],
                    score: localisation_score(&kept, grid, k)?,
                });
            }
        }
        rows.extend(top_rows);
    }
    Ok(rows)
}

/// Scores every method on every cell of every grid. Each cell's class logit
/// is explained on the full grid image (or window by window), the map is
/// optionally smoothed, and then scored; the top-n variant is scored from
/// the same smoothed map.
pub fn run_game(
    model: &Model,
    methods: &[&dyn AttributionMethod],
    grids: &[GridImage],
    opts: &GameOptions,
) -> Result<LocalisationResult> {
    let mut warnings = Vec::new();
    let mut windowed = opts.sliding_window;
    if fixed_input_size(model) && !windowed {
        warnings.push(
            "model has a fixed input size; evaluating with a sliding window (pass --sliding-window to silence)".into(),
        );
        windowed = true;
    }
    let threads = opts.threads.clamp(1, grids.len().max(1));
    let per = grids.len().div_ceil(threads).max(1);
    let parts: Vec<Result<Vec<ScoreRow>>> = thread::scope(|s| {
        let handles: Vec<_> = grids
            .chunks(per)
            .enumerate()
            .map(|(ci, chunk)| {
                s.spawn(move || {
                    let mut rows = Vec::new();
                    for (k, g) in chunk.iter().enumerate() {
                        rows.extend(score_grid(model, methods, g, ci * per + k, opts, windowed)?);
                    }
                    Ok(rows)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("pointing worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    Ok(LocalisationResult { rows, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, Sample};

    fn grid(n: usize, cell: usize) -> GridImage {
        let samples: Vec<Sample> = (0..n * n)
            .map(|k| Sample {
                image: Tensor::full(vec![3, cell, cell], k as f32 / (n * n) as f32),
                label: k,
            })
            .collect();
        let refs: Vec<&Sample> = samples.iter().collect();
        GridImage::from_samples(&refs, n).unwrap()
    }

    #[test]
    fn all_mass_in_cell() {
        let g = grid(2, 4);
        let map = Tensor::from_fn(vec![8, 8], |i| if i / 8 >= 4 && i % 8 < 4 { 2.0 } else { -1.0 }).unwrap();
        assert_eq!(localisation_score(&map, &g, 2).unwrap(), 1.0);
        assert_eq!(localisation_score(&map, &g, 0).unwrap(), 0.0);
    }

    #[test]
    fn uniform_map_scores_quarter() {
        let g = grid(2, 4);
        let map = Tensor::ones(vec![8, 8]);
        for k in 0..4 {
            assert_eq!(localisation_score(&map, &g, k).unwrap(), 0.25);
            assert_eq!(localisation_score(&smooth3(&map).unwrap(), &g, k).unwrap(), 0.25);
        }
    }

    #[test]
    fn sixty_percent_fixture() {
        let g = grid(2, 2);
        // cell 1 (top right) holds 3 of 5 units of positive mass
        #[rustfmt::skip]
        let map = Tensor::new(vec![4, 4], vec![
            0.5, 0.0, 1.0, 2.0,
            0.0, 0.0, 0.0, 0.0,
            1.0, -3.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.5,
        ]).unwrap();
        assert!((localisation_score(&map, &g, 1).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_map_scores_zero_and_bad_cells_error() {
        let g = grid(2, 2);
        let map = Tensor::full(vec![4, 4], -1.0);
        assert_eq!(localisation_score(&map, &g, 0).unwrap(), 0.0);
        assert!(localisation_score(&map, &g, 4).is_err());
        assert!(localisation_score(&Tensor::ones(vec![4, 5]), &g, 0).is_err());
    }

    #[test]
    fn top_n_keeps_largest() {
        let map = Tensor::new(vec![2, 3], vec![0.1, 5.0, -2.0, 3.0, 3.0, 0.0]).unwrap();
        let k = keep_top_n(&map, 2).unwrap();
        assert_eq!(k.data(), &[0.0, 5.0, 0.0, 3.0, 0.0, 0.0]);
        let all = keep_top_n(&map, 6).unwrap();
        assert_eq!(all.data(), &[0.1, 5.0, 0.0, 3.0, 3.0, 0.0]);
        assert_eq!(top_count(0.025, 4096), 103);
    }

    #[test]
    fn summary_quartiles() {
        let rows = (0..5)
            .map(|i| ScoreRow {
                method: "m".into(),
                grid_id: i,
                cell_class: 0,
                score: i as f64 / 4.0,
            })
            .collect();
        let r = LocalisationResult { rows, warnings: vec![] };
        let s = &r.summary()[0];
        assert_eq!((s.mean, s.q1, s.median, s.q3, s.count), (0.5, 0.25, 0.5, 0.75, 5));
        let back = LocalisationResult::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back.rows, r.rows);
    }

    #[test]
    fn grid_geometry() {
        let g = grid(3, 2);
        assert_eq!(g.height(), 6);
        assert_eq!(g.cells[5], Cell { class: 5, row: 1, col: 2 });
    }
}
