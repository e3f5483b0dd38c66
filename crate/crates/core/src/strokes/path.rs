//! Minimal SVG path data reader: `M L Q C Z` in absolute and relative form.

use crate::error::{Error, Result};
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line(Vec2),
    Quad(Vec2, Vec2),
    Cubic(Vec2, Vec2, Vec2),
}

/// A subpath: start point followed by segments. Subpaths are always
/// treated as closed when filled.
#[derive(Debug, Clone, PartialEq)]
pub struct Subpath {
    pub start: Vec2,
    pub segments: Vec<Segment>,
}

impl Subpath {
    /// Applies a point map to every control point.
    pub fn map(&self, f: impl Fn(Vec2) -> Vec2) -> Subpath {
        Subpath {
            start: f(self.start),
            segments: self
                .segments
                .iter()
                .map(|s| match *s {
                    Segment::Line(p) => Segment::Line(f(p)),
                    Segment::Quad(c, p) => Segment::Quad(f(c), f(p)),
                    Segment::Cubic(c1, c2, p) => Segment::Cubic(f(c1), f(c2), f(p)),
                })
                .collect(),
        }
    }

    /// Polyline whose chords deviate from the curves by at most `tolerance`.
    pub fn flatten(&self, tolerance: f64) -> Vec<Vec2> {
        let mut out = vec![self.start];
        let mut cur = self.start;
        for seg in &self.segments {
            match *seg {
                Segment::Line(p) => {
                    out.push(p);
                    cur = p;
                }
                Segment::Quad(c, p) => {
                    // max deviation of n uniform chords is |p0 - 2c + p| / (4 n^2)
                    let dd = (cur - c * 2.0 + p).length();
                    let n = segment_count(dd / (4.0 * tolerance));
                    for i in 1..=n {
                        let t = i as f64 / n as f64;
                        let mt = 1.0 - t;
                        out.push(cur * (mt * mt) + c * (2.0 * mt * t) + p * (t * t));
                    }
                    cur = p;
                }
                Segment::Cubic(c1, c2, p) => {
                    // |B''| <= 6 max|second difference|, chord error <= |B''| / (8 n^2)
                    let dd = (cur - c1 * 2.0 + c2).length().max((c1 - c2 * 2.0 + p).length());
                    let n = segment_count(0.75 * dd / tolerance);
                    for i in 1..=n {
                        let t = i as f64 / n as f64;
                        let mt = 1.0 - t;
                        out.push(
                            cur * (mt * mt * mt)
                                + c1 * (3.0 * mt * mt * t)
                                + c2 * (3.0 * mt * t * t)
                                + p * (t * t * t),
                        );
                    }
                    cur = p;
                }
            }
        }
        out
    }
}

fn segment_count(n_squared: f64) -> usize {
    if n_squared.is_finite() {
        (n_squared.sqrt().ceil() as usize).clamp(1, 4096)
    } else {
        1
    }
}

struct Tokens<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_separators(&mut self) {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start_matches(|c: char| c.is_whitespace() || c == ',');
        self.pos += rest.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_separators();
        self.src[self.pos..].chars().next()
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_separators();
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let mut i = start;
        if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
            i += 1;
        }
        let mut seen_dot = false;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || (bytes[i] == b'.' && !seen_dot)) {
            seen_dot |= bytes[i] == b'.';
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut k = i + 1;
            if k < bytes.len() && (bytes[k] == b'-' || bytes[k] == b'+') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                i = k;
            }
        }
        let text = &self.src[start..i];
        let value = text.parse::<f64>().map_err(|_| {
            let found: String = self.src[start..].chars().take(8).collect();
            Error::PathSyntax(format!("expected number at offset {start}, found '{found}'"))
        })?;
        self.pos = i;
        Ok(value)
    }

    fn point(&mut self) -> Result<Vec2> {
        Ok(Vec2::new(self.number()?, self.number()?))
    }
}

/// Parses SVG path data into subpaths.
pub fn parse_path(data: &str) -> Result<Vec<Subpath>> {
    let mut tokens = Tokens { src: data, pos: 0 };
    let mut subpaths: Vec<Subpath> = Vec::new();
    let mut current: Option<Subpath> = None;
    let mut cur = Vec2::default();
    let mut start = Vec2::default();
    let mut command: Option<char> = None;

    loop {
        let next = tokens.peek();
        let cmd = match next {
            None => break,
            Some(c) if c.is_ascii_alphabetic() => {
                tokens.pos += 1;
                c
            }
            Some(_) => match command {
                // implicit repetition; a repeated moveto continues as lineto
                Some('M') => 'L',
                Some('m') => 'l',
                Some('Z' | 'z') | None => {
                    return Err(Error::PathSyntax(format!("unexpected data at offset {}", tokens.pos)))
                }
                Some(c) => c,
            },
        };
        if command.is_none() && !cmd.eq_ignore_ascii_case(&'m') {
            return Err(Error::PathSyntax("path must start with a moveto".into()));
        }
        let relative = cmd.is_ascii_lowercase();
        let base = if relative { cur } else { Vec2::default() };
        match cmd.to_ascii_uppercase() {
            'M' => {
                if let Some(sp) = current.take() {
                    subpaths.push(sp);
                }
                cur = base + tokens.point()?;
                start = cur;
                current = Some(Subpath {
                    start: cur,
                    segments: Vec::new(),
                });
            }
            'L' => {
                let p = base + tokens.point()?;
                open(&mut current, cur).segments.push(Segment::Line(p));
                cur = p;
            }
            'Q' => {
                let c = base + tokens.point()?;
                let p = base + tokens.point()?;
                open(&mut current, cur).segments.push(Segment::Quad(c, p));
                cur = p;
            }
            'C' => {
                let c1 = base + tokens.point()?;
                let c2 = base + tokens.point()?;
                let p = base + tokens.point()?;
                open(&mut current, cur).segments.push(Segment::Cubic(c1, c2, p));
                cur = p;
            }
            'Z' => {
                if let Some(sp) = current.take() {
                    subpaths.push(sp);
                }
                cur = start;
            }
            _ => return Err(Error::UnsupportedCommand(cmd)),
        }
        command = Some(cmd);
    }
    if let Some(sp) = current.take() {
        subpaths.push(sp);
    }
    Ok(subpaths)
}

fn open(current: &mut Option<Subpath>, cur: Vec2) -> &mut Subpath {
    // drawing after Z restarts at the previous subpath start
    current.get_or_insert_with(|| Subpath {
        start: cur,
        segments: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_and_relative() {
        let a = parse_path("M 10 10 L 20 10 Q 25 15 20 20 C 15 25 12 22 10 20 Z").unwrap();
        let b = parse_path("m10,10 l10,0 q5,5 0,10 c-5,5 -8,2 -10,0 z").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].segments.len(), 3);
    }

    #[test]
    fn implicit_lineto_after_moveto() {
        let p = parse_path("M0 0 10 0 10 10Z").unwrap();
        assert_eq!(p[0].segments, vec![Segment::Line(Vec2::new(10.0, 0.0)), Segment::Line(Vec2::new(10.0, 10.0))]);
    }

    #[test]
    fn compact_numbers() {
        let p = parse_path("M-1.5-2.5L.5.5e1").unwrap();
        assert_eq!(p[0].start, Vec2::new(-1.5, -2.5));
        assert_eq!(p[0].segments[0], Segment::Line(Vec2::new(0.5, 5.0)));
    }

    #[test]
    fn unsupported_commands_are_named() {
        for (data, c) in [("M0 0 H 10", 'H'), ("M0 0 a 1 1 0 0 0 2 2", 'a'), ("M0 0 S 1 1 2 2", 'S')] {
            match parse_path(data) {
                Err(Error::UnsupportedCommand(got)) => assert_eq!(got, c),
                other => panic!("{data}: {other:?}"),
            }
        }
    }

    #[test]
    fn truncated_data_fails() {
        assert!(matches!(parse_path("M 10 10 L 20"), Err(Error::PathSyntax(_))));
        assert!(parse_path("10 10").is_err());
    }

    #[test]
    fn flattening_respects_tolerance() {
        let sp = Subpath {
            start: Vec2::new(0.0, 0.0),
            segments: vec![Segment::Quad(Vec2::new(50.0, 100.0), Vec2::new(100.0, 0.0))],
        };
        let tol = 0.25;
        let pts = sp.flatten(tol);
        // exact curve y(x) = 2x - x^2/50 for this quadratic
        for w in pts.windows(2) {
            for k in 1..10 {
                let f = k as f64 / 10.0;
                let p = w[0] * (1.0 - f) + w[1] * f;
                let y = 2.0 * p.x - p.x * p.x / 50.0;
                assert!(y - p.y <= tol + 1e-9, "deviation {}", y - p.y);
            }
        }
        let line = Subpath { start: Vec2::new(0.0, 0.0), segments: vec![Segment::Line(Vec2::new(3.0, 4.0))] };
        assert_eq!(line.flatten(tol).len(), 2);
    }
}
