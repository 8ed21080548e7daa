//! Minimal grouped bar charts as standalone SVG documents.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    title: String,
    y_label: String,
    categories: Vec<String>,
    series: Vec<(String, Vec<f64>)>,
    category_labels: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl BarChart {
    pub fn new(title: &str, y_label: &str) -> Self {
        BarChart {
            title: title.to_string(),
            y_label: y_label.to_string(),
            categories: Vec::new(),
            series: Vec::new(),
            category_labels: true,
        }
    }

    pub fn categories(mut self, categories: Vec<String>) -> Self {
        self.categories = categories;
        self
    }

    /// Adds a series; missing values are drawn as zero.
    pub fn series(mut self, name: &str, values: Vec<f64>) -> Self {
        self.series.push((name.to_string(), values));
        self
    }

    pub fn hide_category_labels(mut self) -> Self {
        self.category_labels = false;
        self
    }

    pub fn render(&self) -> String {
        let values = || self.series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
        let hi = values().fold(0.0f64, f64::max);
        let lo = values().fold(0.0f64, f64::min);
        let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let y = |v: f64| MARGIN_TOP + (hi - v) / span * plot_h;
        let groups = self.categories.len().max(1) as f64;
        let group_w = plot_w / groups;
        let bar_w = group_w * 0.8 / self.series.len().max(1) as f64;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        for tick in 0..=4 {
            let v = lo + span * tick as f64 / 4.0;
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                WIDTH - MARGIN_RIGHT,
                y(v),
                y(v),
                MARGIN_LEFT - 4.0,
                y(v) + 4.0,
                format_tick(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN_LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
            WIDTH - MARGIN_RIGHT,
            y(0.0),
            y(0.0)
        );
        for (gi, cat) in self.categories.iter().enumerate() {
            let gx = MARGIN_LEFT + group_w * gi as f64 + group_w * 0.1;
            for (si, (_, vals)) in self.series.iter().enumerate() {
                let v = vals.get(gi).copied().filter(|v| v.is_finite()).unwrap_or(0.0);
                let (top, bottom) = if v >= 0.0 { (y(v), y(0.0)) } else { (y(0.0), y(v)) };
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{}: {}</title></rect>"#,
                    gx + bar_w * si as f64,
                    top,
                    bar_w,
                    bottom - top,
                    PALETTE[si % PALETTE.len()],
                    escape(cat),
                    format_tick(v)
                );
            }
            if self.category_labels {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    MARGIN_LEFT + group_w * (gi as f64 + 0.5),
                    HEIGHT - MARGIN_BOTTOM + 16.0,
                    escape(cat)
                );
            }
        }
        for (si, (name, _)) in self.series.iter().enumerate() {
            let lx = MARGIN_LEFT + 110.0 * si as f64;
            let ly = HEIGHT - 14.0;
            let _ = writeln!(
                out,
                r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
                ly - 9.0,
                PALETTE[si % PALETTE.len()],
                lx + 14.0,
                escape(name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn format_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}
