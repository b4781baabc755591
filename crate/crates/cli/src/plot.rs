//! Metric-versus-resolution line charts as standalone SVG.

use std::fmt::Write;

use trajfair::metrics::{EvaluationReport, ScopeSummary};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Power,
    Sensitivity,
    Ppv,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Power, Metric::Sensitivity, Metric::Ppv];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Power => "power",
            Metric::Sensitivity => "sensitivity",
            Metric::Ppv => "ppv",
        }
    }

    fn value(self, s: &ScopeSummary) -> Option<f64> {
        match self {
            Metric::Power => Some(s.power),
            Metric::Sensitivity => s.sensitivity,
            Metric::Ppv => s.ppv,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One series per report, one x position per scope of the first report.
pub fn render(reports: &[EvaluationReport], metric: Metric) -> String {
    let scopes: Vec<String> = reports
        .first()
        .map(|r| r.scopes.iter().map(|s| s.scope.clone()).collect())
        .unwrap_or_default();
    let n = scopes.len().max(1);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |k: usize| MARGIN + plot_w * (k as f64 + 0.5) / n as f64;
    let y = |v: f64| HEIGHT - MARGIN - plot_h * v.clamp(0.0, 1.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let (right, line_y, label_x, label_y) = (WIDTH - MARGIN, y(v), MARGIN - 6.0, y(v) + 4.0);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" x2="{right}" y1="{line_y:.1}" y2="{line_y:.1}" stroke="#ddd"/><text x="{label_x}" y="{label_y:.1}" text-anchor="end">{v:.1}</text>"##
        );
    }
    for (k, scope) in scopes.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x(k),
            HEIGHT - MARGIN + 18.0,
            escape(scope)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        metric.name()
    );
    for (i, report) in reports.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<(f64, f64)> = scopes
            .iter()
            .enumerate()
            .filter_map(|(k, name)| {
                let v = metric.value(report.scope(name)?)?;
                Some((x(k), y(v)))
            })
            .collect();
        let path: Vec<String> = points.iter().map(|(px, py)| format!("{px:.1},{py:.1}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for (px, py) in &points {
            let _ = writeln!(svg, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{} = {}</text>"#,
            MARGIN + 8.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            escape(&report.parameter),
            escape(&report.param_value)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(scope: &str, power: f64) -> ScopeSummary {
        ScopeSummary {
            scope: scope.into(),
            power,
            sensitivity: None,
            ppv: Some(0.5),
            n_datasets: 10,
            n_detected: 5,
            n_undefined_ppv: 0,
        }
    }

    #[test]
    fn renders_series_and_skips_undefined() {
        let reports = vec![EvaluationReport {
            parameter: "magnitude".into(),
            param_value: "0.2".into(),
            scopes: vec![summary("r100", 0.5), summary("all", 1.0)],
        }];
        let svg = render(&reports, Metric::Power);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("magnitude = 0.2"));
        assert_eq!(svg.matches("<circle").count(), 2);
        let svg = render(&reports, Metric::Sensitivity);
        assert_eq!(svg.matches("<circle").count(), 0);
    }
}
