//! Tiny SVG writer restricted to `path`, `rect` and `text` primitives.

use std::fmt::Write as _;

pub struct SvgDoc {
    width: f64,
    height: f64,
    body: String,
}

fn fmt_num(v: f64) -> String {
    // Fixed decimals keep output byte-stable and compact.
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl SvgDoc {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: f64) {
        writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="{}"/>"#,
            fmt_num(x),
            fmt_num(y),
            fmt_num(w),
            fmt_num(h),
            fill,
            fmt_num(opacity)
        )
        .expect("string write");
    }

    /// Polyline through the given points.
    pub fn path(&mut self, points: &[(f64, f64)], stroke: &str, stroke_width: f64) {
        if points.is_empty() {
            return;
        }
        let mut d = String::new();
        for (i, (x, y)) in points.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{} {} ", fmt_num(*x), fmt_num(*y)).expect("string write");
        }
        writeln!(
            self.body,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            d.trim_end(),
            stroke,
            fmt_num(stroke_width)
        )
        .expect("string write");
    }

    /// Straight segment; a degenerate two-point path.
    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.path(&[(x1, y1), (x2, y2)], stroke, width);
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif">{}</text>"#,
            fmt_num(x),
            fmt_num(y),
            fmt_num(size),
            xml_escape(content)
        )
        .expect("string write");
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n{}</svg>\n",
            fmt_num(self.width),
            fmt_num(self.height),
            fmt_num(self.width),
            fmt_num(self.height),
            self.body
        )
    }
}

pub fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Structural well-formedness check used by tests and the self test:
/// balanced tags, and only the allowed element names.
pub fn check_svg(text: &str) -> Result<(), String> {
    let allowed = ["svg", "path", "rect", "text"];
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        let Some(end_rel) = rest[start..].find('>') else {
            return Err("unterminated tag".into());
        };
        let tag = &rest[start + 1..start + end_rel];
        rest = &rest[start + end_rel + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            match stack.pop() {
                Some(open) if open == name => {}
                Some(open) => return Err(format!("mismatched </{name}> after <{open}>")),
                None => return Err(format!("stray </{name}>")),
            }
            continue;
        }
        let self_closing = tag.ends_with('/');
        let name: String = tag
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect();
        if !allowed.contains(&name.as_str()) {
            return Err(format!("element `{name}` is not allowed"));
        }
        if !self_closing {
            stack.push(name);
        }
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err(format!("unclosed elements: {stack:?}"))
    }
}
