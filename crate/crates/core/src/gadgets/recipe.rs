//! Gadget recipes: expression trees over primitives and compositions, with a
//! small line-oriented text syntax.
//!
//! ```text
//! # comments start with '#'
//! p3 = path 3
//! pair = composeE(edge, p3)
//! composeE(pair, degenerate)
//! ```
//! The value of a recipe file is its last statement.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gadgets::rules::Kind;
use crate::graph::Multigraph;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Recipe {
    /// A single edge between the two ports.
    Edge,
    /// A path with an odd number of edges between the ports.
    Path(usize),
    /// Edge kind: two isolated ports. Field kind: a lone root.
    Degenerate,
    /// A 4-cycle through the root.
    Cycle4,
    /// Ports joined through new vertices u, v to the children placed in parallel.
    ComposeE(Vec<Arc<Recipe>>),
    /// A root attached to a vertex u that carries the children's roots.
    ComposeF(Vec<Arc<Recipe>>),
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Edge => write!(f, "edge"),
            Recipe::Path(k) => write!(f, "path {k}"),
            Recipe::Degenerate => write!(f, "degenerate"),
            Recipe::Cycle4 => write!(f, "cycle4"),
            Recipe::ComposeE(cs) | Recipe::ComposeF(cs) => {
                let name = if matches!(self, Recipe::ComposeE(_)) { "composeE" } else { "composeF" };
                write!(f, "{name}(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Recipe {
    /// Kind implied by the recipe; `None` for the bare degenerate gadget.
    pub fn kind(&self) -> Option<Kind> {
        match self {
            Recipe::Edge | Recipe::Path(_) | Recipe::ComposeE(_) => Some(Kind::Edge),
            Recipe::Cycle4 | Recipe::ComposeF(_) => Some(Kind::Field),
            Recipe::Degenerate => None,
        }
    }

    /// Checks kinds recursively against `kind`.
    pub fn check(&self, kind: Kind) -> Result<()> {
        if let Some(k) = self.kind() {
            if k != kind {
                return Err(Error::invalid(format!("'{self}' is not a {} gadget", kind.name())));
            }
        }
        match self {
            Recipe::Path(k) if *k == 0 || k % 2 == 0 => {
                Err(Error::invalid(format!("path length {k} must be odd")))
            }
            Recipe::ComposeE(cs) | Recipe::ComposeF(cs) => {
                if cs.is_empty() {
                    return Err(Error::invalid("composition needs at least one child"));
                }
                cs.iter().try_for_each(|c| c.check(kind))
            }
            _ => Ok(()),
        }
    }

    /// Number of vertices of the materialised gadget.
    pub fn vertex_count(&self, kind: Kind) -> usize {
        match self {
            Recipe::Edge => 2,
            Recipe::Path(k) => k + 1,
            Recipe::Degenerate => match kind {
                Kind::Edge => 2,
                Kind::Field => 1,
            },
            Recipe::Cycle4 => 4,
            Recipe::ComposeE(cs) => 4 + cs.iter().map(|c| c.vertex_count(kind) - 2).sum::<usize>(),
            Recipe::ComposeF(cs) => 2 + cs.iter().map(|c| c.vertex_count(kind) - 1).sum::<usize>(),
        }
    }

    /// Builds the gadget graph; returns it with its ports (two for edge
    /// gadgets, the root for field gadgets).
    pub fn materialize(&self, kind: Kind) -> Result<(Multigraph, Vec<usize>)> {
        self.check(kind)?;
        Ok(self.build(kind))
    }

    fn build(&self, kind: Kind) -> (Multigraph, Vec<usize>) {
        match self {
            Recipe::Edge => (Multigraph::from_edges(2, &[(0, 1)]).unwrap(), vec![0, 1]),
            Recipe::Path(k) => {
                let e: Vec<(usize, usize)> = (0..*k).map(|i| (i, i + 1)).collect();
                (Multigraph::from_edges(k + 1, &e).unwrap(), vec![0, *k])
            }
            Recipe::Degenerate => match kind {
                Kind::Edge => (Multigraph::new(2), vec![0, 1]),
                Kind::Field => (Multigraph::new(1), vec![0]),
            },
            Recipe::Cycle4 => (
                Multigraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
                vec![0],
            ),
            Recipe::ComposeE(cs) => {
                let mut g = Multigraph::new(4);
                let (rho, u, v, rho2) = (0, 1, 2, 3);
                g.add_edge(rho, u).unwrap();
                for c in cs {
                    let (cg, ports) = c.build(kind);
                    attach(&mut g, &cg, &[(ports[0], u), (ports[1], v)]);
                }
                g.add_edge(v, rho2).unwrap();
                (g, vec![rho, rho2])
            }
            Recipe::ComposeF(cs) => {
                let mut g = Multigraph::new(2);
                g.add_edge(0, 1).unwrap();
                for c in cs {
                    let (cg, ports) = c.build(kind);
                    attach(&mut g, &cg, &[(ports[0], 1)]);
                }
                (g, vec![0])
            }
        }
    }
}

/// Copies `child` into `g`, identifying the listed child vertices with
/// existing vertices of `g`.
pub(crate) fn attach(g: &mut Multigraph, child: &Multigraph, glue: &[(usize, usize)]) -> Vec<usize> {
    let mut map = vec![usize::MAX; child.n()];
    for &(c, host) in glue {
        map[c] = host;
    }
    for slot in map.iter_mut() {
        if *slot == usize::MAX {
            *slot = g.add_vertex();
        }
    }
    for (e, &(a, b)) in child.edges().iter().enumerate() {
        let id = g.add_edge(map[a], map[b]).expect("glued gadget edge");
        g.set_edge_activity(id, child.edge_activity(e).cloned());
    }
    for v in 0..child.n() {
        if let Some(x) = child.vertex_activity(v) {
            g.set_vertex_activity(map[v], Some(x.clone()));
        }
    }
    map
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(usize),
    LParen,
    RParen,
    Comma,
    Eq,
}

fn lex(line: &str, lno: usize) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let n = s.parse().map_err(|_| parse_err(lno, col, "number too large"))?;
            out.push((Tok::Num(n), col));
        } else {
            let t = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '=' => Tok::Eq,
                _ => return Err(parse_err(lno, col, &format!("unexpected character '{c}'"))),
            };
            out.push((t, col));
            i += 1;
        }
    }
    Ok(out)
}

fn parse_err(line: usize, column: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        column,
        message: msg.to_string(),
    }
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
    env: &'a HashMap<String, Arc<Recipe>>,
}

impl Parser<'_> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end_col)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let col = self.col();
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => Err(parse_err(self.line, col, &format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Arc<Recipe>> {
        let col = self.col();
        let name = match self.next() {
            Some(Tok::Ident(s)) => s,
            _ => return Err(parse_err(self.line, col, "expected a gadget expression")),
        };
        match name.as_str() {
            "edge" => Ok(Arc::new(Recipe::Edge)),
            "degenerate" => Ok(Arc::new(Recipe::Degenerate)),
            "cycle4" => Ok(Arc::new(Recipe::Cycle4)),
            "path" => {
                let c = self.col();
                match self.next() {
                    Some(Tok::Num(k)) if k % 2 == 1 => Ok(Arc::new(Recipe::Path(k))),
                    Some(Tok::Num(_)) => Err(parse_err(self.line, c, "path length must be odd")),
                    _ => Err(parse_err(self.line, c, "expected path length")),
                }
            }
            "composeE" | "composeF" => {
                self.expect(Tok::LParen, "'('")?;
                let mut children = vec![self.expr()?];
                loop {
                    let c = self.col();
                    match self.next() {
                        Some(Tok::Comma) => children.push(self.expr()?),
                        Some(Tok::RParen) => break,
                        _ => return Err(parse_err(self.line, c, "expected ',' or ')'")),
                    }
                }
                Ok(Arc::new(if name == "composeE" {
                    Recipe::ComposeE(children)
                } else {
                    Recipe::ComposeF(children)
                }))
            }
            other => self
                .env
                .get(other)
                .cloned()
                .ok_or_else(|| parse_err(self.line, col, &format!("unknown name '{other}'"))),
        }
    }
}

/// Parses recipe text; the result is the last statement's expression.
pub fn parse_recipe(text: &str) -> Result<Arc<Recipe>> {
    let mut env: HashMap<String, Arc<Recipe>> = HashMap::new();
    let mut last = None;
    for (i, raw) in text.lines().enumerate() {
        let lno = i + 1;
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let toks = lex(line, lno)?;
        let binding = match (toks.first(), toks.get(1)) {
            (Some((Tok::Ident(name), _)), Some((Tok::Eq, _))) => Some(name.clone()),
            _ => None,
        };
        let start = if binding.is_some() { 2 } else { 0 };
        let mut p = Parser {
            toks: &toks[start..],
            pos: 0,
            line: lno,
            end_col: line.len() + 1,
            env: &env,
        };
        let value = p.expr()?;
        if p.pos < p.toks.len() {
            return Err(parse_err(lno, p.col(), "trailing input"));
        }
        if let Some(name) = binding {
            if matches!(name.as_str(), "edge" | "path" | "degenerate" | "cycle4" | "composeE" | "composeF") {
                return Err(parse_err(lno, 1, "cannot rebind a reserved word"));
            }
            env.insert(name, value.clone());
        }
        last = Some(value);
    }
    last.ok_or_else(|| parse_err(1, 1, "empty recipe"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bindings_and_nesting() {
        let r = parse_recipe("a = path 3\nb = composeE(a, edge)\ncomposeE(b, degenerate)\n").unwrap();
        assert_eq!(r.to_string(), "composeE(composeE(path 3,edge),degenerate)");
        assert_eq!(parse_recipe(&r.to_string()).unwrap(), r);
    }

    #[test]
    fn reports_positions() {
        match parse_recipe("x = composeE(edge edge)").unwrap_err() {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (1, 19)),
            e => panic!("{e:?}"),
        }
        assert!(parse_recipe("path 4").is_err());
        assert!(parse_recipe("composeE(foo)").is_err());
    }

    #[test]
    fn vertex_counts_match_materialisation() {
        let r = parse_recipe("composeE(composeE(edge), path 3, degenerate)").unwrap();
        let (g, _) = r.materialize(Kind::Edge).unwrap();
        assert_eq!(g.n(), r.vertex_count(Kind::Edge));
        let f = parse_recipe("composeF(composeF(degenerate), cycle4)").unwrap();
        let (g, _) = f.materialize(Kind::Field).unwrap();
        assert_eq!(g.n(), f.vertex_count(Kind::Field));
    }
}
