//! Self-contained SVG figures drawn from the analysis CSVs.
//!
//! Every data point is one element with `class="marker"`, so a figure can be
//! checked against the row count of the table it was drawn from.

use std::fmt::Write as _;

use crate::config::SPACES;
use crate::error::CliError;
use crate::manifest::Workspace;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A plot area mapping data coordinates onto the canvas.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let range = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            if !lo.is_finite() {
                return (-1.0, 1.0);
            }
            let pad = ((hi - lo) * 0.08).max(1e-6);
            (lo - pad, hi + pad)
        };
        Frame { x: range(&mut xs.clone()), y: range(&mut ys.clone()) }
    }

    fn square(limit: f64) -> Frame {
        Frame { x: (-limit, limit), y: (-limit, limit) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

struct Svg(String);

impl Svg {
    fn new(title: &str) -> Svg {
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
        Svg(s)
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(self.0, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#);
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, fill: &str, body: &str) {
        let _ = writeln!(self.0, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" fill="{fill}">{}</text>"#, escape(body));
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str) {
        let grey = r##"stroke="#444" stroke-width="1""##;
        self.line(MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, grey);
        self.line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, grey);
        let faint = r##"stroke="#bbb" stroke-dasharray="3,3""##;
        if f.x.0 < 0.0 && f.x.1 > 0.0 {
            self.line(f.px(0.0), MARGIN, f.px(0.0), HEIGHT - MARGIN, faint);
        }
        if f.y.0 < 0.0 && f.y.1 > 0.0 {
            self.line(MARGIN, f.py(0.0), WIDTH - MARGIN, f.py(0.0), faint);
        }
        for (v, x) in [(f.x.0, MARGIN), (f.x.1, WIDTH - MARGIN)] {
            self.text(x, HEIGHT - MARGIN + 14.0, "middle", "#444", &format!("{v:.2}"));
        }
        for (v, y) in [(f.y.0, HEIGHT - MARGIN), (f.y.1, MARGIN)] {
            self.text(MARGIN - 4.0, y + 4.0, "end", "#444", &format!("{v:.2}"));
        }
        self.text(WIDTH / 2.0, HEIGHT - 16.0, "middle", "#000", xlabel);
        let _ = writeln!(
            self.0,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel)
        );
    }

    /// One data marker. Glyph 0 is a circle, 1 a triangle, 2 a square,
    /// 3 a diamond.
    fn marker(&mut self, x: f64, y: f64, glyph: usize, fill: &str, title: &str) {
        let r = 5.0;
        let shape = match glyph % 4 {
            0 => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}""#),
            1 => format!(
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}""#,
                x,
                y - r,
                x - r,
                y + r,
                x + r,
                y + r
            ),
            2 => format!(r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}""#, x - r, y - r, 2.0 * r, 2.0 * r),
            _ => format!(
                r#"<polygon points="{x:.2},{:.2} {:.2},{y:.2} {x:.2},{:.2} {:.2},{y:.2}""#,
                y - r,
                x + r,
                y + r,
                x - r
            ),
        };
        let _ = writeln!(
            self.0,
            r##"{shape} class="marker" fill="{fill}" fill-opacity="0.8" stroke="#000" stroke-width="0.5"><title>{}</title></{}>"##,
            escape(title),
            match glyph % 4 {
                0 => "circle",
                2 => "rect",
                _ => "polygon",
            }
        );
    }

    fn finish(mut self) -> String {
        self.0.push_str("</svg>\n");
        self.0
    }
}

fn read_csv(ws: &Workspace, rel: &str) -> Result<Option<(Vec<String>, Vec<Vec<String>>)>, CliError> {
    let path = ws.path(rel);
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(&path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
    Ok(Some((header, rows)))
}

fn num(s: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| CliError::Runtime(format!("bad number `{s}` in analysis output")))
}

fn first_index<T: PartialEq>(items: &mut Vec<T>, item: T) -> usize {
    match items.iter().position(|x| *x == item) {
        Some(i) => i,
        None => {
            items.push(item);
            items.len() - 1
        }
    }
}

/// First two rotated components, coloured by game, glyph by player count.
pub fn scatter(space: &str, header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let c1 = header.iter().position(|h| h == "RC1").ok_or_else(|| CliError::Runtime("scores lack RC1".into()))?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| Ok((num(&r[c1])?, num(&r[c1 + 1])?))).collect::<Result<_, CliError>>()?;
    let f = Frame::new(points.iter().map(|p| p.0), points.iter().map(|p| p.1));
    let mut svg = Svg::new(&format!("{space}: rotated components"));
    svg.axes(&f, "RC1", "RC2");
    let mut games = Vec::new();
    let mut counts = Vec::new();
    for (r, &(x, y)) in rows.iter().zip(&points) {
        let g = first_index(&mut games, r[0].clone());
        let p = first_index(&mut counts, r[1].clone());
        let title = if r[2].is_empty() { format!("{} {}p", r[0], r[1]) } else { format!("{} {}p {}", r[0], r[1], r[2]) };
        svg.marker(f.px(x), f.py(y), p, PALETTE[g % PALETTE.len()], &title);
    }
    for (i, g) in games.iter().enumerate() {
        svg.text(WIDTH - MARGIN + 4.0, MARGIN + 14.0 * i as f64, "start", PALETTE[i % PALETTE.len()], g);
    }
    let glyphs = ["circle", "triangle", "square", "diamond"];
    for (i, p) in counts.iter().enumerate() {
        let y = MARGIN + 14.0 * (games.len() + 1 + i) as f64;
        svg.text(WIDTH - MARGIN + 4.0, y, "start", "#000", &format!("{p}p {}", glyphs[i % 4]));
    }
    Ok(svg.finish())
}

/// Real eigenvalues against the random-data threshold.
pub fn scree(space: &str, rows: &[Vec<String>]) -> Result<String, CliError> {
    let real: Vec<f64> = rows.iter().map(|r| num(&r[1])).collect::<Result<_, _>>()?;
    let random: Vec<f64> = rows.iter().map(|r| num(&r[2])).collect::<Result<_, _>>()?;
    let xs = (1..=real.len()).map(|i| i as f64);
    let f = Frame::new(xs.clone(), real.iter().chain(&random).copied().chain([0.0]));
    let mut svg = Svg::new(&format!("{space}: scree"));
    svg.axes(&f, "component", "eigenvalue");
    for (series, colour, dash) in [(&real, PALETTE[0], ""), (&random, PALETTE[1], r#" stroke-dasharray="5,3""#)] {
        let pts: Vec<String> = series.iter().enumerate().map(|(i, v)| format!("{:.2},{:.2}", f.px(i as f64 + 1.0), f.py(*v))).collect();
        let _ = writeln!(svg.0, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
    }
    for (i, v) in real.iter().enumerate() {
        svg.marker(f.px(i as f64 + 1.0), f.py(*v), 0, PALETTE[0], &format!("component {}: {v:.3}", i + 1));
    }
    svg.text(WIDTH - MARGIN, MARGIN, "end", PALETTE[0], "data");
    svg.text(WIDTH - MARGIN, MARGIN + 14.0, "end", PALETTE[1], "random threshold");
    Ok(svg.finish())
}

/// Horizontal bars of the rotated loadings, one panel per component.
pub fn loadings(space: &str, header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let rc: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("RC")).map(|(i, _)| i).collect();
    let k = rc.len().max(1);
    let n = rows.len().max(1);
    let panel = (WIDTH - 2.0 * MARGIN - 80.0) / k as f64;
    let bar = (HEIGHT - 2.0 * MARGIN) / n as f64;
    let mut svg = Svg::new(&format!("{space}: rotated loadings"));
    for (i, r) in rows.iter().enumerate() {
        svg.text(MARGIN + 76.0, MARGIN + bar * (i as f64 + 0.7), "end", "#000", &r[0]);
    }
    for (c, &col) in rc.iter().enumerate() {
        let left = MARGIN + 80.0 + panel * c as f64;
        let mid = left + panel / 2.0;
        svg.line(mid, MARGIN, mid, HEIGHT - MARGIN, r##"stroke="#444""##);
        svg.text(mid, MARGIN - 8.0, "middle", "#000", &header[col]);
        for (i, r) in rows.iter().enumerate() {
            let v = num(&r[col])?.clamp(-1.0, 1.0);
            let w = v.abs() * (panel / 2.0 - 4.0);
            let x = if v < 0.0 { mid - w } else { mid };
            let fill = if v.abs() >= 0.5 { PALETTE[0] } else { "#9ecae1" };
            let _ = writeln!(
                svg.0,
                r#"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="{fill}"><title>{} {}: {v:.3}</title></rect>"#,
                MARGIN + bar * i as f64 + 1.0,
                (bar - 2.0).max(1.0),
                escape(&r[0]),
                header[col]
            );
        }
    }
    Ok(svg.finish())
}

/// Canonical loadings of both sets with the unit and half-variance circles.
pub fn cca_circle(pair: &str, rows: &[Vec<String>]) -> Result<String, CliError> {
    let f = Frame::square(1.1);
    let mut svg = Svg::new(&format!("CCA loadings: {pair}"));
    svg.axes(&f, "CC1", "CC2");
    let scale = f.px(1.0) - f.px(0.0);
    let (cx, cy) = (f.px(0.0), f.py(0.0));
    for radius in [1.0, std::f64::consts::FRAC_1_SQRT_2] {
        let _ = writeln!(
            svg.0,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="none" stroke="#888" stroke-dasharray="4,3"/>"##,
            radius * scale
        );
    }
    let mut sets = Vec::new();
    for r in rows {
        let s = first_index(&mut sets, r[0].clone());
        let (x, y) = (num(&r[2])?, r.get(3).map(|v| num(v)).transpose()?.unwrap_or(0.0));
        svg.marker(f.px(x), f.py(y), s, PALETTE[s % PALETTE.len()], &format!("{}: {}", r[0], r[1]));
        svg.text(f.px(x) + 6.0, f.py(y) - 4.0, "start", PALETTE[s % PALETTE.len()], &r[1]);
    }
    for (i, s) in sets.iter().enumerate() {
        svg.text(WIDTH - MARGIN, MARGIN + 14.0 * i as f64, "end", PALETTE[i % PALETTE.len()], s);
    }
    Ok(svg.finish())
}

/// Draws every figure whose analysis output exists, recording files under
/// `stage`.
pub fn render_all(ws: &mut Workspace, stage: &str) -> Result<usize, CliError> {
    let mut written = 0;
    for space in SPACES {
        let dir = format!("analysis/{space}");
        let timing = ws.is_timing(&format!("{dir}/scores.csv"));
        if let Some((h, rows)) = read_csv(ws, &format!("{dir}/scores.csv"))? {
            let svg = scatter(space, &h, &rows)?;
            ws.write(Some(stage), &format!("plots/{space}_scatter.svg"), svg.as_bytes(), None, timing)?;
            written += 1;
        }
        if let Some((_, rows)) = read_csv(ws, &format!("{dir}/scree.csv"))? {
            let svg = scree(space, &rows)?;
            ws.write(Some(stage), &format!("plots/{space}_scree.svg"), svg.as_bytes(), None, timing)?;
            written += 1;
        }
        if let Some((h, rows)) = read_csv(ws, &format!("{dir}/pca_loadings.csv"))? {
            let svg = loadings(space, &h, &rows)?;
            ws.write(Some(stage), &format!("plots/{space}_loadings.svg"), svg.as_bytes(), None, timing)?;
            written += 1;
        }
    }
    let pairs: Vec<String> = ws
        .manifest
        .files
        .keys()
        .filter_map(|f| f.strip_prefix("analysis/cca/")?.strip_suffix("/cca_loadings.csv").map(String::from))
        .collect();
    for pair in pairs {
        let rel = format!("analysis/cca/{pair}/cca_loadings.csv");
        if let Some((_, rows)) = read_csv(ws, &rel)? {
            let timing = ws.is_timing(&rel);
            let svg = cca_circle(&pair, &rows)?;
            ws.write(Some(stage), &format!("plots/cca_{pair}.svg"), svg.as_bytes(), None, timing)?;
            written += 1;
        }
    }
    Ok(written)
}
