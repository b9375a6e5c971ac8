//! Minimal SVG chart emission: line charts (with an optional shaded band),
//! square matrix heatmaps and histograms. Output is a plain string; callers
//! decide where it goes.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 56.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Series { label: label.into(), values }
    }
}

/// Shaded region between two curves (e.g. prediction intervals).
#[derive(Debug, Clone)]
pub struct Band {
    pub label: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_min_max<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

struct Frame {
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, t: f64, t_max: f64) -> f64 {
        MARGIN_L + t / t_max.max(1.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-12);
        HEIGHT - MARGIN_B - (v - self.y0) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn axes(out: &mut String, frame: &Frame, t_max: f64, title: &str, x_label: &str, y_label: &str) {
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"17\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    ));
    // Axis lines.
    out.push_str(&format!(
        "<line x1=\"{ml:.1}\" y1=\"{hb:.1}\" x2=\"{wr:.1}\" y2=\"{hb:.1}\" stroke=\"#333\"/>\n<line x1=\"{ml:.1}\" y1=\"{mt:.1}\" x2=\"{ml:.1}\" y2=\"{hb:.1}\" stroke=\"#333\"/>\n",
        ml = MARGIN_L,
        mt = MARGIN_T,
        hb = HEIGHT - MARGIN_B,
        wr = WIDTH - MARGIN_R,
    ));
    // Ticks.
    for k in 0..=5 {
        let frac = k as f64 / 5.0;
        let v = frame.y0 + frac * (frame.y1 - frame.y0);
        let y = frame.y(v);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ccc\" stroke-dasharray=\"3,3\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L,
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0,
            format_tick(v)
        ));
        let t = frac * t_max;
        let x = frame.x(t, t_max);
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_B + 18.0,
            format_tick(t)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        esc(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        esc(y_label)
    ));
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

/// Multi-series line chart over the sample index, with an optional shaded
/// band behind the lines.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    band: Option<&Band>,
) -> String {
    let mut all: Vec<f64> = series.iter().flat_map(|s| s.values.iter().copied()).collect();
    if let Some(b) = band {
        all.extend(b.lower.iter().copied());
        all.extend(b.upper.iter().copied());
    }
    let (lo, hi) = finite_min_max(all.iter());
    let pad = 0.05 * (hi - lo);
    let frame = Frame { y0: lo - pad, y1: hi + pad };
    let t_max = series
        .iter()
        .map(|s| s.values.len())
        .chain(band.iter().map(|b| b.lower.len()))
        .max()
        .unwrap_or(1)
        .saturating_sub(1) as f64;

    let mut out = svg_open();
    axes(&mut out, &frame, t_max, title, x_label, y_label);

    if let Some(b) = band {
        let mut d = String::from("M");
        for (i, &v) in b.upper.iter().enumerate() {
            d.push_str(&format!(" {:.1},{:.1}", frame.x(i as f64, t_max), frame.y(v)));
        }
        for (i, &v) in b.lower.iter().enumerate().rev() {
            d.push_str(&format!(" {:.1},{:.1}", frame.x(i as f64, t_max), frame.y(v)));
        }
        d.push('Z');
        out.push_str(&format!(
            "<path d=\"{d}\" fill=\"#1f77b4\" fill-opacity=\"0.18\" stroke=\"none\"/>\n"
        ));
    }

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut d = String::from("M");
        for (i, &v) in s.values.iter().enumerate() {
            d.push_str(&format!(" {:.1},{:.1}", frame.x(i as f64, t_max), frame.y(v)));
        }
        out.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n"
        ));
        // Legend entry.
        let lx = MARGIN_L + 12.0 + 150.0 * si as f64;
        out.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            MARGIN_T - 9.0,
            lx + 16.0,
            MARGIN_T - 3.0,
            esc(&s.label)
        ));
    }
    if let Some(b) = band {
        let lx = MARGIN_L + 12.0 + 150.0 * series.len() as f64;
        out.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"8\" fill=\"#1f77b4\" fill-opacity=\"0.18\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            MARGIN_T - 11.0,
            lx + 16.0,
            MARGIN_T - 3.0,
            esc(&b.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Square-matrix heatmap with row/column labels and a linear color ramp from
/// white to a deep blue.
pub fn heatmap(title: &str, matrix: &ndarray::Array2<f64>, labels: &[String]) -> String {
    let n = matrix.nrows();
    let (lo, hi) = finite_min_max(matrix.iter());
    let side = (HEIGHT - MARGIN_T - MARGIN_B).min(WIDTH - MARGIN_L - MARGIN_R);
    let cell = side / n.max(1) as f64;

    let mut out = svg_open();
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"17\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    ));
    for i in 0..n {
        for j in 0..n {
            let v = matrix[[i, j]];
            let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
            let r = (255.0 - t * (255.0 - 8.0)) as u8;
            let g = (255.0 - t * (255.0 - 48.0)) as u8;
            let b = (255.0 - t * (255.0 - 107.0)) as u8;
            out.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({r},{g},{b})\"><title>{} -&gt; {}: {v}</title></rect>\n",
                MARGIN_L + j as f64 * cell,
                MARGIN_T + i as f64 * cell,
                cell,
                cell,
                esc(&labels[i]),
                esc(&labels[j]),
            ));
        }
        let label = esc(&labels[i]);
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{label}</text>\n",
            MARGIN_L - 6.0,
            MARGIN_T + i as f64 * cell + cell / 2.0 + 4.0,
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">{label}</text>\n",
            MARGIN_L + i as f64 * cell + cell / 2.0,
            MARGIN_T + side + 16.0,
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\">low {} / high {}</text>\n",
        MARGIN_L + side + 12.0,
        MARGIN_T + 12.0,
        format_tick(lo),
        format_tick(hi)
    ));
    out.push_str("</svg>\n");
    out
}

/// Histogram of samples with `bins` equal-width bins.
pub fn histogram(title: &str, x_label: &str, samples: &[f64], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = finite_min_max(samples.iter());
    let width = (hi - lo).max(1e-12) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        if s.is_finite() {
            let k = (((s - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let peak = *counts.iter().max().unwrap_or(&1) as f64;
    let frame = Frame { y0: 0.0, y1: peak };
    let mut out = svg_open();
    axes(&mut out, &frame, hi - lo, title, x_label, "count");
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x = MARGIN_L + k as f64 / bins as f64 * plot_w;
        let y = frame.y(c as f64);
        out.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#1f77b4\" stroke=\"#fff\" stroke-width=\"0.5\"><title>[{}, {}): {c}</title></rect>\n",
            plot_w / bins as f64,
            HEIGHT - MARGIN_B - y,
            format_tick(lo + k as f64 * width),
            format_tick(lo + (k + 1) as f64 * width),
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    )
}
