//! Minimal hand-emitted SVG line charts: axes, ticks, polylines and a
//! legend, no dependencies. Good enough for learning-curve plots.

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct ChartOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot log10(y) and label ticks as powers of ten.
    pub log_y: bool,
    pub width: f64,
    pub height: f64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            log_y: false,
            width: 720.0,
            height: 480.0,
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

/// Render the chart; returns the SVG document as a string.
pub fn line_chart(series: &[Series], opts: &ChartOptions) -> String {
    let (ml, mr, mt, mb) = (70.0, 160.0, 40.0, 55.0);
    let pw = opts.width - ml - mr;
    let ph = opts.height - mt - mb;

    let transform = |y: f64| if opts.log_y { y.max(1e-300).log10() } else { y };

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if opts.log_y && y <= 0.0 {
                continue;
            }
            xs.push(x);
            ys.push(transform(y));
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);

    let px = |x: f64| ml + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| mt + ph - (y - y_lo) / (y_hi - y_lo) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        r#"<svg version="1.1" width="{}" height="{}" xmlns="http://www.w3.org/2000/svg">"#,
        opts.width, opts.height
    ));
    svg.push('\n');
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    svg.push('\n');

    // frame
    svg.push_str(&format!(
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    ));
    svg.push('\n');

    // ticks and grid
    let ticks = 5usize;
    for k in 0..=ticks {
        let fx = x_lo + (x_hi - x_lo) * k as f64 / ticks as f64;
        let x = px(fx);
        svg.push_str(&format!(
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#,
            mt + ph,
            mt + ph + 6.0
        ));
        svg.push_str(&format!(
            r#"<text x="{x}" y="{}" font-family="monospace" font-size="11" text-anchor="middle">{}</text>"#,
            mt + ph + 20.0,
            fmt_tick(fx)
        ));
        svg.push('\n');

        let fy = y_lo + (y_hi - y_lo) * k as f64 / ticks as f64;
        let y = py(fy);
        let label = if opts.log_y {
            format!("1e{}", fmt_tick(fy))
        } else {
            fmt_tick(fy)
        };
        svg.push_str(&format!(
            r#"<line x1="{}" y1="{y}" x2="{ml}" y2="{y}" stroke="black"/>"#,
            ml - 6.0
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" font-family="monospace" font-size="11" text-anchor="end">{label}</text>"#,
            ml - 10.0,
            y + 4.0
        ));
        svg.push('\n');
    }

    // axis labels and title
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        opts.height - 12.0,
        escape(&opts.x_label)
    ));
    svg.push_str(&format!(
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&opts.y_label)
    ));
    svg.push_str(&format!(
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" font-weight="bold" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        escape(&opts.title)
    ));
    svg.push('\n');

    // polylines + legend
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (k, &(x, y)) in s
            .points
            .iter()
            .filter(|(_, y)| !opts.log_y || *y > 0.0)
            .enumerate()
        {
            let cmd = if k == 0 { 'M' } else { 'L' };
            path.push_str(&format!("{cmd}{:.2} {:.2} ", px(x), py(transform(y))));
        }
        svg.push_str(&format!(
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            path.trim_end()
        ));
        svg.push('\n');
        let ly = mt + 14.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            r#"<rect x="{}" y="{}" width="14" height="4" fill="{color}"/>"#,
            ml + pw + 12.0,
            ly - 4.0
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" font-family="monospace" font-size="11">{}</text>"#,
            ml + pw + 32.0,
            ly,
            escape(&s.label)
        ));
        svg.push('\n');
    }

    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_polyline_and_legend() {
        let series = [Series {
            label: "sgd-g2".into(),
            points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)],
        }];
        let svg = line_chart(
            &series,
            &ChartOptions {
                title: "loss".into(),
                x_label: "gradient evaluations".into(),
                y_label: "loss".into(),
                ..Default::default()
            },
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("<path"));
        assert!(svg.contains("sgd-g2"));
    }

    #[test]
    fn log_scale_drops_nonpositive_points() {
        let series = [Series {
            label: "h".into(),
            points: vec![(0.0, 0.0), (1.0, 1e-6), (2.0, 1e-2)],
        }];
        let svg = line_chart(
            &series,
            &ChartOptions {
                log_y: true,
                ..Default::default()
            },
        );
        // the y=0 point cannot appear on a log axis
        assert!(svg.contains("<path"));
        assert!(svg.contains("1e-6") || svg.contains("1e-5") || svg.contains("1e"));
    }
}
