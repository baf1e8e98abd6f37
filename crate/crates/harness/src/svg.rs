//! Small native SVG 1.1 plotting layer: line/scatter series, histogram
//! bars, covariance ellipses, reference lines, legends, optional log
//! axes with 1-2-5 tick placement, and multi-panel composition. Output is
//! deterministic: fixed palette, fixed float formatting, no timestamps.

use nalgebra::DMatrix;

use crate::{HarnessError, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const ML: f64 = 64.0; // margins
const MR: f64 = 18.0;
const MT: f64 = 30.0;
const MB: f64 = 48.0;

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick label: shortest decimal after rounding away float dust.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e6 || a < 1e-4 {
        return format!("{v:e}");
    }
    let r = (v * 1e9).round() / 1e9;
    format!("{r}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Closed-form principal axes of a 2×2 covariance at a given squared
/// Mahalanobis radius: semi-axis lengths √(λᵢ·r²) and the major-axis
/// angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseParams {
    pub rx: f64,
    pub ry: f64,
    pub angle_deg: f64,
}

pub fn ellipse_params(cov: &DMatrix<f64>, level: f64) -> Result<EllipseParams> {
    if cov.nrows() != 2 || cov.ncols() != 2 {
        return Err(HarnessError::Config(format!(
            "confidence ellipses need a 2×2 covariance, got {}×{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let half_tr = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    if !(l2 > 0.0) || !level.is_finite() || level <= 0.0 {
        return Err(HarnessError::Numerical(format!(
            "covariance is not positive definite enough for an ellipse (eigenvalues {l1:.3e}, {l2:.3e})"
        )));
    }
    let angle = if b.abs() < 1e-300 {
        if a >= c {
            0.0
        } else {
            90.0
        }
    } else {
        (l1 - a).atan2(b).to_degrees()
    };
    Ok(EllipseParams {
        rx: (l1 * level).sqrt(),
        ry: (l2 * level).sqrt(),
        angle_deg: angle,
    })
}

enum Mark {
    Line,
    Scatter,
    LineMarked,
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    mark: Mark,
    dashed: bool,
}

struct EllipseShape {
    name: String,
    cx: f64,
    cy: f64,
    params: EllipseParams,
    dashed: bool,
}

struct BarSet {
    name: String,
    bars: Vec<(f64, f64)>, // centre, height (baseline 0)
    width: f64,
}

pub struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    width: f64,
    height: f64,
    x_log: bool,
    y_log: bool,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
    series: Vec<Series>,
    ellipses: Vec<EllipseShape>,
    bars: Vec<BarSet>,
    vlines: Vec<f64>,
    hlines: Vec<f64>,
    crosses: Vec<(f64, f64, String)>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Figure {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            width: 460.0,
            height: 340.0,
            x_log: false,
            y_log: false,
            x_range: None,
            y_range: None,
            series: Vec::new(),
            ellipses: Vec::new(),
            bars: Vec::new(),
            vlines: Vec::new(),
            hlines: Vec::new(),
            crosses: Vec::new(),
        }
    }

    pub fn size(mut self, w: f64, h: f64) -> Self {
        self.width = w;
        self.height = h;
        self
    }

    pub fn x_log(mut self) -> Self {
        self.x_log = true;
        self
    }

    pub fn y_log(mut self) -> Self {
        self.y_log = true;
        self
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    pub fn line(mut self, name: &str, pts: &[(f64, f64)]) -> Self {
        self.series.push(Series {
            name: name.to_string(),
            points: pts.to_vec(),
            mark: Mark::Line,
            dashed: false,
        });
        self
    }

    pub fn line_dashed(mut self, name: &str, pts: &[(f64, f64)]) -> Self {
        self.series.push(Series {
            name: name.to_string(),
            points: pts.to_vec(),
            mark: Mark::Line,
            dashed: true,
        });
        self
    }

    pub fn line_marked(mut self, name: &str, pts: &[(f64, f64)]) -> Self {
        self.series.push(Series {
            name: name.to_string(),
            points: pts.to_vec(),
            mark: Mark::LineMarked,
            dashed: false,
        });
        self
    }

    pub fn scatter(mut self, name: &str, pts: &[(f64, f64)]) -> Self {
        self.series.push(Series {
            name: name.to_string(),
            points: pts.to_vec(),
            mark: Mark::Scatter,
            dashed: false,
        });
        self
    }

    pub fn bars(mut self, name: &str, bars: &[(f64, f64)], width: f64) -> Self {
        self.bars.push(BarSet {
            name: name.to_string(),
            bars: bars.to_vec(),
            width,
        });
        self
    }

    /// A covariance ellipse centred at `mean`, sized to the given squared
    /// Mahalanobis radius (e.g. a χ² quantile).
    pub fn ellipse(
        mut self,
        name: &str,
        mean: (f64, f64),
        cov: &DMatrix<f64>,
        level: f64,
        dashed: bool,
    ) -> Result<Self> {
        let params = ellipse_params(cov, level)?;
        self.ellipses.push(EllipseShape {
            name: name.to_string(),
            cx: mean.0,
            cy: mean.1,
            params,
            dashed,
        });
        Ok(self)
    }

    /// An × marker with no legend entry (truth markers and the like).
    pub fn cross(mut self, x: f64, y: f64, color: &str) -> Self {
        self.crosses.push((x, y, color.to_string()));
        self
    }

    pub fn vline(mut self, x: f64) -> Self {
        self.vlines.push(x);
        self
    }

    pub fn hline(mut self, y: f64) -> Self {
        self.hlines.push(y);
        self
    }

    fn data_extent(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        for e in &self.ellipses {
            // Conservative bounding box: the ellipse fits inside the
            // circle of its major semi-axis.
            let r = e.params.rx.max(e.params.ry);
            xs.push(e.cx - r);
            xs.push(e.cx + r);
            ys.push(e.cy - r);
            ys.push(e.cy + r);
        }
        for b in &self.bars {
            for &(c, h) in &b.bars {
                xs.push(c - 0.5 * b.width);
                xs.push(c + 0.5 * b.width);
                ys.push(0.0);
                ys.push(h);
            }
        }
        for &(x, y, _) in &self.crosses {
            xs.push(x);
            ys.push(y);
        }
        for &x in &self.vlines {
            xs.push(x);
        }
        for &y in &self.hlines {
            ys.push(y);
        }
        let span = |vs: &[f64], log: bool| -> (f64, f64) {
            let vals: Vec<f64> = vs
                .iter()
                .copied()
                .filter(|v| v.is_finite() && (!log || *v > 0.0))
                .collect();
            if vals.is_empty() {
                return if log { (0.1, 10.0) } else { (0.0, 1.0) };
            }
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.2 };
                if log {
                    (lo / 2.0, hi * 2.0)
                } else {
                    (lo - pad, hi + pad)
                }
            } else if log {
                (lo / 1.3, hi * 1.3)
            } else {
                let pad = (hi - lo) * 0.06;
                (lo - pad, hi + pad)
            }
        };
        (span(&xs, self.x_log), span(&ys, self.y_log))
    }

    pub fn render(&self) -> String {
        self.render_inner("f0", true)
    }

    fn render_inner(&self, id: &str, standalone: bool) -> String {
        let (auto_x, auto_y) = self.data_extent();
        let (x_lo, x_hi) = self.x_range.unwrap_or(auto_x);
        let (y_lo, y_hi) = self.y_range.unwrap_or(auto_y);
        let tx = |v: f64| if self.x_log { v.log10() } else { v };
        let ty = |v: f64| if self.y_log { v.log10() } else { v };
        let (txl, txh) = (tx(x_lo), tx(x_hi));
        let (tyl, tyh) = (ty(y_lo), ty(y_hi));
        let pw = self.width - ML - MR;
        let ph = self.height - MT - MB;
        let px = |v: f64| ML + (tx(v) - txl) / (txh - txl) * pw;
        let py = |v: f64| MT + ph - (ty(v) - tyl) / (tyh - tyl) * ph;

        let mut s = String::new();
        if standalone {
            s.push_str(&format!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
                fmt2(self.width), fmt2(self.height), fmt2(self.width), fmt2(self.height)
            ));
            s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        }
        s.push_str(&format!(
            "<defs><clipPath id=\"{id}-plot\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/></clipPath></defs>\n",
            fmt2(ML), fmt2(MT), fmt2(pw), fmt2(ph)
        ));

        // Frame and title.
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n",
            fmt2(ML), fmt2(MT), fmt2(pw), fmt2(ph)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" font-weight=\"bold\">{}</text>\n",
            fmt2(ML + pw / 2.0), esc(&self.title)
        ));

        // Ticks.
        let x_ticks = if self.x_log {
            log_ticks(x_lo, x_hi)
        } else {
            lin_ticks(x_lo, x_hi)
        };
        let y_ticks = if self.y_log {
            log_ticks(y_lo, y_hi)
        } else {
            lin_ticks(y_lo, y_hi)
        };
        for &t in &x_ticks {
            let x = px(t);
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
                fmt2(x), fmt2(MT + ph), fmt2(MT + ph + 4.0)
            ));
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n",
                fmt2(x), fmt2(MT), fmt2(MT + ph)
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                fmt2(x), fmt2(MT + ph + 16.0), esc(&fmt_tick(t))
            ));
        }
        for &t in &y_ticks {
            let y = py(t);
            s.push_str(&format!(
                "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
                fmt2(y), fmt2(ML - 4.0), fmt2(ML)
            ));
            s.push_str(&format!(
                "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n",
                fmt2(y), fmt2(ML), fmt2(ML + pw)
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                fmt2(ML - 7.0), fmt2(y + 3.5), esc(&fmt_tick(t))
            ));
        }
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt2(ML + pw / 2.0), fmt2(self.height - 10.0), esc(&self.x_label)
        ));
        s.push_str(&format!(
            "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
            fmt2(MT + ph / 2.0), esc(&self.y_label)
        ));

        // Clipped data region.
        s.push_str(&format!("<g clip-path=\"url(#{id}-plot)\">\n"));
        for &x in &self.vlines {
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#999\" stroke-width=\"1\" stroke-dasharray=\"3,3\"/>\n",
                fmt2(px(x)), fmt2(MT), fmt2(MT + ph)
            ));
        }
        for &y in &self.hlines {
            s.push_str(&format!(
                "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#999\" stroke-width=\"1\" stroke-dasharray=\"3,3\"/>\n",
                fmt2(py(y)), fmt2(ML), fmt2(ML + pw)
            ));
        }

        let mut color = 0usize;
        let mut legend: Vec<(String, String, bool)> = Vec::new(); // name, color, dashed
        for b in &self.bars {
            let col = PALETTE[color % PALETTE.len()];
            color += 1;
            legend.push((b.name.clone(), col.to_string(), false));
            for &(c, h) in &b.bars {
                let x0 = px(c - 0.5 * b.width);
                let x1 = px(c + 0.5 * b.width);
                let y_top = py(h.max(0.0));
                let y_base = py(0.0f64.min(h).max(if self.y_log { y_lo } else { 0.0 }));
                let (top, bottom) = if y_top <= y_base { (y_top, y_base) } else { (y_base, y_top) };
                s.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"0.55\" stroke=\"{}\"/>\n",
                    fmt2(x0), fmt2(top), fmt2(x1 - x0), fmt2(bottom - top), col, col
                ));
            }
        }
        for series in &self.series {
            let col = PALETTE[color % PALETTE.len()];
            color += 1;
            legend.push((series.name.clone(), col.to_string(), series.dashed));
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|(x, y)| {
                    x.is_finite()
                        && y.is_finite()
                        && (!self.x_log || *x > 0.0)
                        && (!self.y_log || *y > 0.0)
                })
                .map(|&(x, y)| (px(x), py(y)))
                .collect();
            match series.mark {
                Mark::Line | Mark::LineMarked => {
                    let path: Vec<String> =
                        pts.iter().map(|(x, y)| format!("{},{}", fmt2(*x), fmt2(*y))).collect();
                    let dash = if series.dashed {
                        " stroke-dasharray=\"5,4\""
                    } else {
                        ""
                    };
                    s.push_str(&format!(
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{}/>\n",
                        path.join(" "),
                        col,
                        dash
                    ));
                    if matches!(series.mark, Mark::LineMarked) {
                        for (x, y) in &pts {
                            s.push_str(&format!(
                                "<circle cx=\"{}\" cy=\"{}\" r=\"2.6\" fill=\"{}\"/>\n",
                                fmt2(*x),
                                fmt2(*y),
                                col
                            ));
                        }
                    }
                }
                Mark::Scatter => {
                    for (x, y) in &pts {
                        s.push_str(&format!(
                            "<circle cx=\"{}\" cy=\"{}\" r=\"2.4\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
                            fmt2(*x),
                            fmt2(*y),
                            col
                        ));
                    }
                }
            }
        }
        for e in &self.ellipses {
            let col = PALETTE[color % PALETTE.len()];
            color += 1;
            legend.push((e.name.clone(), col.to_string(), e.dashed));
            // Axis lengths must be mapped through the same scale as the
            // centre; ellipses only make sense on linear axes.
            let rx_px = e.params.rx / (txh - txl) * pw;
            let ry_px = e.params.ry / (tyh - tyl) * ph;
            let dash = if e.dashed {
                " stroke-dasharray=\"5,4\""
            } else {
                ""
            };
            s.push_str(&format!(
                "<g transform=\"translate({} {}) rotate({})\"><ellipse rx=\"{}\" ry=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{}/></g>\n",
                fmt2(px(e.cx)),
                fmt2(py(e.cy)),
                fmt2(-e.params.angle_deg),
                fmt2(rx_px),
                fmt2(ry_px),
                col,
                dash
            ));
            s.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.2\" fill=\"{}\"/>\n",
                fmt2(px(e.cx)),
                fmt2(py(e.cy)),
                col
            ));
        }
        for (x, y, col) in &self.crosses {
            let (cx, cy) = (px(*x), py(*y));
            for (dx0, dy0, dx1, dy1) in [(-4.0, -4.0, 4.0, 4.0), (-4.0, 4.0, 4.0, -4.0)] {
                s.push_str(&format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
                    fmt2(cx + dx0),
                    fmt2(cy + dy0),
                    fmt2(cx + dx1),
                    fmt2(cy + dy1),
                    col
                ));
            }
        }
        s.push_str("</g>\n");

        // Legend, top-right corner of the plot area.
        let named: Vec<&(String, String, bool)> =
            legend.iter().filter(|(n, _, _)| !n.is_empty()).collect();
        if !named.is_empty() {
            let lh = 15.0;
            let box_h = named.len() as f64 * lh + 8.0;
            let box_w = 10.0
                + 22.0
                + named.iter().map(|(n, _, _)| n.len()).max().unwrap_or(0) as f64 * 6.2;
            let lx = ML + pw - box_w - 6.0;
            let ly = MT + 6.0;
            s.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\" fill-opacity=\"0.85\" stroke=\"#bbb\"/>\n",
                fmt2(lx), fmt2(ly), fmt2(box_w), fmt2(box_h)
            ));
            for (i, (name, col, dashed)) in named.iter().enumerate() {
                let y = ly + 12.0 + i as f64 * lh;
                let dash = if *dashed {
                    " stroke-dasharray=\"5,4\""
                } else {
                    ""
                };
                s.push_str(&format!(
                    "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"{3}\" stroke-width=\"2\"{4}/>\n",
                    fmt2(lx + 6.0),
                    fmt2(lx + 24.0),
                    fmt2(y - 3.5),
                    col,
                    dash
                ));
                s.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10.5\">{}</text>\n",
                    fmt2(lx + 28.0),
                    fmt2(y),
                    esc(name)
                ));
            }
        }
        if standalone {
            s.push_str("</svg>\n");
        }
        s
    }
}

/// Ticks at a 1-2-5 step sized for roughly five intervals.
fn lin_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let mult = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    let step = mult * mag;
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

/// Decade ticks for log axes; falls back to in-decade 1-2-5 points when
/// the range spans less than one decade.
fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (l0, l1) = (lo.log10().ceil() as i32, hi.log10().floor() as i32);
    if l1 >= l0 {
        (l0..=l1).map(|k| 10f64.powi(k)).collect()
    } else {
        lin_ticks(lo, hi).into_iter().filter(|v| *v > 0.0).collect()
    }
}

/// Compose figures into a grid, each panel keeping its own size.
pub fn panel_grid(figures: &[Figure], cols: usize) -> String {
    let cols = cols.max(1);
    let cell_w = figures.iter().map(|f| f.width).fold(0.0, f64::max);
    let cell_h = figures.iter().map(|f| f.height).fold(0.0, f64::max);
    let rows = figures.len().div_ceil(cols);
    let total_w = cell_w * cols.min(figures.len().max(1)) as f64;
    let total_h = cell_h * rows as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        fmt2(total_w), fmt2(total_h), fmt2(total_w), fmt2(total_h)
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (i, fig) in figures.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        s.push_str(&format!(
            "<svg x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
            fmt2(c as f64 * cell_w),
            fmt2(r as f64 * cell_h),
            fmt2(fig.width),
            fmt2(fig.height),
            fmt2(fig.width),
            fmt2(fig.height)
        ));
        s.push_str(&fig.render_inner(&format!("p{i}"), false));
        s.push_str("</svg>\n");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ellipse_axes_match_hand_computed_eigenpairs() {
        // Diagonal: semi-axes are just scaled standard deviations.
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let e = ellipse_params(&cov, 1.0).unwrap();
        assert_relative_eq!(e.rx, 2.0, epsilon = 1e-12);
        assert_relative_eq!(e.ry, 1.0, epsilon = 1e-12);
        assert_eq!(e.angle_deg, 0.0);

        // 45°-rotated version of the same ellipse.
        let cov = DMatrix::from_row_slice(2, 2, &[2.5, 1.5, 1.5, 2.5]);
        let e = ellipse_params(&cov, 1.0).unwrap();
        assert_relative_eq!(e.rx, 2.0, epsilon = 1e-12);
        assert_relative_eq!(e.ry, 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.angle_deg, 45.0, epsilon = 1e-9);

        // Larger level scales the axes by √level.
        let e2 = ellipse_params(&cov, 4.0).unwrap();
        assert_relative_eq!(e2.rx, 4.0, epsilon = 1e-12);

        // Singular covariance is refused.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(ellipse_params(&cov, 1.0).is_err());
    }

    #[test]
    fn tick_generation_uses_one_two_five_steps() {
        let t = lin_ticks(0.0, 1.0);
        assert_eq!(t, vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let t = lin_ticks(-3.0, 17.0);
        assert!(t.contains(&0.0) && t.contains(&15.0));
        let t = log_ticks(0.5, 2000.0);
        assert_eq!(t, vec![1.0, 10.0, 100.0, 1000.0]);
    }

    #[test]
    fn rendered_document_is_valid_standalone_svg() {
        let fig = Figure::new("demo", "x", "y")
            .line("first", &[(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)])
            .scatter("cloud", &[(0.5, 1.5), (1.5, 2.5)])
            .vline(1.0);
        let doc = fig.render();
        assert!(doc.starts_with("<svg "));
        assert!(doc.trim_end().ends_with("</svg>"));
        assert!(doc.contains("<polyline"));
        assert!(doc.contains("demo"));
        // Deterministic: same input, same bytes.
        let fig2 = Figure::new("demo", "x", "y")
            .line("first", &[(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)])
            .scatter("cloud", &[(0.5, 1.5), (1.5, 2.5)])
            .vline(1.0);
        assert_eq!(doc, fig2.render());
    }

    #[test]
    fn panels_nest_with_unique_clip_ids() {
        let a = Figure::new("a", "x", "y").line("s", &[(0.0, 0.0), (1.0, 1.0)]);
        let b = Figure::new("b", "x", "y").line("s", &[(0.0, 1.0), (1.0, 0.0)]);
        let doc = panel_grid(&[a, b], 2);
        assert!(doc.contains("p0-plot"));
        assert!(doc.contains("p1-plot"));
        assert!(doc.matches("<svg ").count() >= 3);
    }

    #[test]
    fn log_scale_drops_nonpositive_points_instead_of_failing() {
        let fig = Figure::new("t", "n", "seconds")
            .x_log()
            .y_log()
            .line("s", &[(10.0, 0.5), (100.0, 0.05), (0.0, -1.0)]);
        let doc = fig.render();
        assert!(doc.contains("<polyline"));
    }
}
