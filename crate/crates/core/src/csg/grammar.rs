//! Textual `.csg` scene format.
//!
//! ```text
//! #! seed=7 max_solids=3 ground=0
//! difference(
//!   box(hx=1, hy=1, hz=1) @t(0, 1, 0) r(1, 0, 0, 0) s(1),
//!   sphere(r=1.2) @t(0, 1, 0)
//! )
//! ```
//!
//! `#!` header keys are optional (defaults: seed 0, max_solids 6, ground 0);
//! any other `#` line is a comment. The transform suffix and each of its
//! three parts are optional but must appear in `t r s` order.

use std::fmt::Write as _;

use thiserror::Error;

use super::{BoolOp, CsgError, CsgNode, CsgScene, Primitive, Transform, MAX_SOLIDS};
use crate::math::{Quat, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scene: {0}")]
    Semantic(#[from] CsgError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
    Eq,
    At,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

struct Header {
    seed: u64,
    max_solids: usize,
    ground: f64,
}

fn parse_header(line_no: usize, body: &str, header: &mut Header) -> Result<(), ParseError> {
    for item in body.split_whitespace() {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| syntax(line_no, 1, format!("expected key=value in header, got `{item}`")))?;
        let bad = |_| syntax(line_no, 1, format!("bad value for `{key}`: `{value}`"));
        match key {
            "seed" => header.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "max_solids" => {
                header.max_solids = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
            }
            "ground" => header.ground = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            _ => return Err(syntax(line_no, 1, format!("unknown header key `{key}`"))),
        }
    }
    Ok(())
}

fn tokenize(text: &str, header: &mut Header) -> Result<Vec<Spanned>, ParseError> {
    let mut toks = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line_no = li + 1;
        let trimmed = line.trim_start();
        if let Some(body) = trimmed.strip_prefix("#!") {
            parse_header(line_no, body, header)?;
            continue;
        }
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let single = match c {
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                ',' => Some(Tok::Comma),
                '=' => Some(Tok::Eq),
                '@' => Some(Tok::At),
                _ => None,
            };
            if let Some(tok) = single {
                toks.push(Spanned { tok, line: line_no, column });
                i += 1;
            } else if c == '#' {
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                toks.push(Spanned {
                    tok: Tok::Ident(word),
                    line: line_no,
                    column,
                });
            } else if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let v: f64 = lit
                    .parse()
                    .map_err(|_| syntax(line_no, column, format!("malformed number `{lit}`")))?;
                toks.push(Spanned {
                    tok: Tok::Num(v),
                    line: line_no,
                    column,
                });
            } else {
                return Err(syntax(line_no, column, format!("unexpected character `{c}`")));
            }
        }
    }
    let (line, column) = (text.lines().count().max(1), 1);
    toks.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(toks)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        let t = self.peek();
        syntax(t.line, t.column, message)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek().tok == want {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(format!("expected {what}, found {:?}", self.peek().tok)))
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.peek().tok {
            Tok::Num(v) => {
                self.next();
                Ok(v)
            }
            ref other => Err(self.err_here(format!("expected number, found {other:?}"))),
        }
    }

    fn numbers(&mut self, n: usize) -> Result<Vec<f64>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                self.expect(Tok::Comma, "`,`")?;
            }
            out.push(self.number()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(out)
    }

    fn node(&mut self) -> Result<CsgNode, ParseError> {
        let head = self.next();
        let name = match head.tok {
            Tok::Ident(name) => name,
            other => {
                return Err(syntax(
                    head.line,
                    head.column,
                    format!("expected primitive or operation, found {other:?}"),
                ))
            }
        };
        let op = match name.as_str() {
            "union" => Some(BoolOp::Union),
            "difference" => Some(BoolOp::Difference),
            "intersection" => Some(BoolOp::Intersection),
            _ => None,
        };
        if let Some(op) = op {
            self.expect(Tok::LParen, "`(`")?;
            let left = self.node()?;
            self.expect(Tok::Comma, "`,`")?;
            let right = self.node()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(CsgNode::op(op, left, right));
        }
        let params = self.key_values()?;
        let primitive = build_primitive(&name, &params).map_err(|m| syntax(head.line, head.column, m))?;
        let transform = self.transform()?;
        Ok(CsgNode::leaf(primitive, transform))
    }

    fn key_values(&mut self) -> Result<Vec<(String, f64)>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        loop {
            let t = self.next();
            let key = match t.tok {
                Tok::Ident(k) => k,
                other => return Err(syntax(t.line, t.column, format!("expected parameter name, found {other:?}"))),
            };
            self.expect(Tok::Eq, "`=`")?;
            let v = self.number()?;
            out.push((key, v));
            match self.peek().tok {
                Tok::Comma => {
                    self.next();
                }
                Tok::RParen => {
                    self.next();
                    return Ok(out);
                }
                _ => return Err(self.err_here("expected `,` or `)`")),
            }
        }
    }

    fn transform(&mut self) -> Result<Transform, ParseError> {
        let mut xf = Transform::default();
        if self.peek().tok != Tok::At {
            return Ok(xf);
        }
        self.next();
        let mut stage = 0;
        let mut seen_any = false;
        while let Tok::Ident(name) = &self.peek().tok {
            let order = match name.as_str() {
                "t" => 1,
                "r" => 2,
                "s" => 3,
                _ => break,
            };
            if order <= stage {
                return Err(self.err_here("transform parts must appear once each, in `t r s` order"));
            }
            stage = order;
            seen_any = true;
            self.next();
            match order {
                1 => {
                    let v = self.numbers(3)?;
                    xf.translation = Vec3::new(v[0], v[1], v[2]);
                }
                2 => {
                    let v = self.numbers(4)?;
                    xf.rotation = Quat::new(v[0], v[1], v[2], v[3]);
                }
                _ => {
                    xf.scale = self.numbers(1)?[0];
                }
            }
        }
        if !seen_any {
            return Err(self.err_here("expected `t(...)`, `r(...)` or `s(...)` after `@`"));
        }
        Ok(xf)
    }
}

fn build_primitive(kind: &str, params: &[(String, f64)]) -> Result<Primitive, String> {
    let keys: &[&str] = match kind {
        "sphere" => &["r"],
        "box" => &["hx", "hy", "hz"],
        "cylinder" | "cone" => &["r", "h"],
        "torus" => &["major", "minor"],
        _ => return Err(format!("unknown primitive or operation `{kind}`")),
    };
    let mut values = vec![None; keys.len()];
    for (k, v) in params {
        let idx = keys
            .iter()
            .position(|want| want == k)
            .ok_or_else(|| format!("unknown parameter `{k}` for {kind}"))?;
        if values[idx].replace(*v).is_some() {
            return Err(format!("duplicate parameter `{k}` for {kind}"));
        }
    }
    let mut got = Vec::with_capacity(keys.len());
    for (k, v) in keys.iter().zip(values) {
        got.push(v.ok_or_else(|| format!("missing parameter `{k}` for {kind}"))?);
    }
    Ok(match kind {
        "sphere" => Primitive::Sphere { radius: got[0] },
        "box" => Primitive::Box {
            half: Vec3::new(got[0], got[1], got[2]),
        },
        "cylinder" => Primitive::Cylinder {
            radius: got[0],
            half_height: got[1],
        },
        "cone" => Primitive::Cone {
            radius: got[0],
            half_height: got[1],
        },
        _ => Primitive::Torus {
            major: got[0],
            minor: got[1],
        },
    })
}

/// Parses a `.csg` scene description and validates its invariants.
pub fn parse_scene(text: &str) -> Result<CsgScene, ParseError> {
    let mut header = Header {
        seed: 0,
        max_solids: MAX_SOLIDS,
        ground: 0.0,
    };
    let toks = tokenize(text, &mut header)?;
    let mut parser = Parser { toks, pos: 0 };
    let root = parser.node()?;
    if parser.peek().tok != Tok::Eof {
        return Err(parser.err_here("trailing input after scene"));
    }
    let leaves = root.leaf_count();
    if leaves > MAX_SOLIDS {
        return Err(CsgError::TooManySolids {
            leaves,
            max: MAX_SOLIDS,
        }
        .into());
    }
    let scene = CsgScene {
        root,
        ground_plane: header.ground,
        seed: header.seed,
        max_solids: header.max_solids,
    };
    scene.validate()?;
    Ok(scene)
}

fn write_primitive(out: &mut String, p: &Primitive) {
    let _ = match *p {
        Primitive::Sphere { radius } => write!(out, "sphere(r={radius:?})"),
        Primitive::Box { half } => write!(out, "box(hx={:?}, hy={:?}, hz={:?})", half.x, half.y, half.z),
        Primitive::Cylinder {
            radius,
            half_height,
        } => write!(out, "cylinder(r={radius:?}, h={half_height:?})"),
        Primitive::Cone {
            radius,
            half_height,
        } => write!(out, "cone(r={radius:?}, h={half_height:?})"),
        Primitive::Torus { major, minor } => write!(out, "torus(major={major:?}, minor={minor:?})"),
    };
}

fn write_node(out: &mut String, node: &CsgNode, depth: usize) {
    let indent = "  ".repeat(depth);
    match node {
        CsgNode::Leaf {
            primitive,
            transform,
        } => {
            out.push_str(&indent);
            write_primitive(out, primitive);
            let (t, q, s) = (transform.translation, transform.rotation, transform.scale);
            let _ = write!(
                out,
                " @t({:?}, {:?}, {:?}) r({:?}, {:?}, {:?}, {:?}) s({s:?})",
                t.x, t.y, t.z, q.w, q.x, q.y, q.z
            );
        }
        CsgNode::Op { op, left, right } => {
            let _ = writeln!(out, "{indent}{}(", op.name());
            write_node(out, left, depth + 1);
            out.push_str(",\n");
            write_node(out, right, depth + 1);
            let _ = write!(out, "\n{indent})");
        }
    }
}

/// Renders a scene in the `.csg` format; floats use shortest round-trip form.
pub fn serialize_scene(scene: &CsgScene) -> String {
    let mut out = format!(
        "#! seed={} max_solids={} ground={:?}\n",
        scene.seed, scene.max_solids, scene.ground_plane
    );
    write_node(&mut out, &scene.root, 0);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csg::sample_scene;

    #[test]
    fn parses_two_leaf_union() {
        let s = parse_scene("union(sphere(r=1), box(hx=1,hy=1,hz=1))").unwrap();
        assert_eq!(s.leaf_count(), 2);
        match &s.root {
            CsgNode::Op { op, left, right } => {
                assert_eq!(*op, BoolOp::Union);
                assert!(matches!(**left, CsgNode::Leaf { primitive: Primitive::Sphere { radius }, .. } if radius == 1.0));
                assert!(matches!(**right, CsgNode::Leaf { primitive: Primitive::Box { .. }, .. }));
            }
            other => panic!("expected op, got {other:?}"),
        }
    }

    #[test]
    fn negative_radius_is_semantic_error() {
        let e = parse_scene("sphere(r=-1)").unwrap_err();
        assert!(matches!(e, ParseError::Semantic(CsgError::InvalidPrimitive(_))), "{e}");
    }

    #[test]
    fn too_many_leaves_is_semantic_error() {
        let leaf = "sphere(r=1)";
        let mut text = leaf.to_string();
        for _ in 0..6 {
            text = format!("union({text}, {leaf})");
        }
        let e = parse_scene(&text).unwrap_err();
        assert!(matches!(e, ParseError::Semantic(CsgError::TooManySolids { leaves: 7, .. })));
    }

    #[test]
    fn header_bound_is_enforced() {
        let e = parse_scene("#! max_solids=1\nunion(sphere(r=1), sphere(r=2))").unwrap_err();
        assert!(matches!(e, ParseError::Semantic(CsgError::TooManySolids { leaves: 2, max: 1 })));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_scene("union(sphere(r=1),\n  box(hx=1 hy=1, hz=1))").unwrap_err();
        match e {
            ParseError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 12)),
            other => panic!("{other}"),
        }
        assert!(matches!(parse_scene("blob(r=1)"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_scene("sphere(r=1) extra"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_scene("sphere(r=1) @s(1) t(0,0,0)"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn transforms_and_comments() {
        let s = parse_scene("# a comment\nsphere(r=1) @t(1, 2.5, -3e-1) s(2) # trailing\n").unwrap();
        let (_, xf) = s.root.leaves()[0];
        assert_eq!(xf.translation, Vec3::new(1.0, 2.5, -0.3));
        assert_eq!(xf.scale, 2.0);
        assert_eq!(xf.rotation, Quat::IDENTITY);
    }

    #[test]
    fn sampled_scene_round_trips() {
        let s = sample_scene(7, 3).unwrap();
        assert_eq!(parse_scene(&serialize_scene(&s)).unwrap(), s);
    }
}
