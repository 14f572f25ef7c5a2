//! Undirected multigraphs with optional per-element activities, and the text
//! edge-list format used for input and output.

use crate::error::{Error, Result};
use crate::rational::{fmt_rational, parse_rational, Rational};

#[derive(Debug, Clone, PartialEq)]
pub struct Multigraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    edge_activity: Vec<Option<Rational>>,
    vertex_activity: Vec<Option<Rational>>,
}

impl Multigraph {
    pub fn new(n: usize) -> Self {
        Multigraph {
            n,
            edges: Vec::new(),
            edge_activity: Vec::new(),
            vertex_activity: vec![None; n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Multigraph::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn add_vertex(&mut self) -> usize {
        self.vertex_activity.push(None);
        self.n += 1;
        self.n - 1
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<usize> {
        if u >= self.n || v >= self.n {
            return Err(Error::invalid(format!(
                "edge ({u},{v}) references a vertex outside 0..{}",
                self.n
            )));
        }
        if u == v {
            return Err(Error::invalid(format!("self-loop at vertex {u}")));
        }
        self.edges.push((u, v));
        self.edge_activity.push(None);
        Ok(self.edges.len() - 1)
    }

    pub fn set_edge_activity(&mut self, e: usize, value: Option<Rational>) {
        self.edge_activity[e] = value;
    }

    pub fn set_vertex_activity(&mut self, v: usize, value: Option<Rational>) {
        self.vertex_activity[v] = value;
    }

    pub fn edge_activity(&self, e: usize) -> Option<&Rational> {
        self.edge_activity[e].as_ref()
    }

    pub fn vertex_activity(&self, v: usize) -> Option<&Rational> {
        self.vertex_activity[v].as_ref()
    }

    pub fn has_edge_activities(&self) -> bool {
        self.edge_activity.iter().any(Option::is_some)
    }

    pub fn has_vertex_activities(&self) -> bool {
        self.vertex_activity.iter().any(Option::is_some)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .map(|&(a, b)| (a == v) as usize + (b == v) as usize)
            .sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Incidence lists: for each vertex, (neighbor, edge id) pairs.
    pub fn incidence(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let adj = self.incidence();
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_simple(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.edges
            .iter()
            .all(|&(a, b)| seen.insert((a.min(b), a.max(b))))
    }

    /// A proper 2-colouring if one exists, colour 0 on the smallest vertex of
    /// each component.
    pub fn bipartition(&self) -> Option<Vec<u8>> {
        let adj = self.incidence();
        let mut colour: Vec<Option<u8>> = vec![None; self.n];
        for s in 0..self.n {
            if colour[s].is_some() {
                continue;
            }
            colour[s] = Some(0);
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                let c = colour[v].unwrap();
                for &(w, _) in &adj[v] {
                    match colour[w] {
                        None => {
                            colour[w] = Some(1 - c);
                            stack.push(w);
                        }
                        Some(cw) if cw == c => return None,
                        _ => {}
                    }
                }
            }
        }
        Some(colour.into_iter().map(Option::unwrap).collect())
    }

    /// True when repeated removal of vertices with at most two distinct
    /// neighbours (joining those neighbours) empties the graph, i.e. the
    /// graph has treewidth at most two.
    pub fn is_series_parallel(&self) -> bool {
        elimination_width(self.n, self.edges.iter().copied()) <= 2
    }

    /// Appends a copy of `other`; returns the vertex offset used.
    pub fn append(&mut self, other: &Multigraph) -> usize {
        let offset = self.n;
        self.n += other.n;
        self.vertex_activity.extend(other.vertex_activity.iter().cloned());
        for (e, &(a, b)) in other.edges.iter().enumerate() {
            self.edges.push((a + offset, b + offset));
            self.edge_activity.push(other.edge_activity[e].clone());
        }
        offset
    }

    /// Parses the edge-list text format.
    pub fn parse(text: &str) -> Result<Self> {
        parse_graph(text)
    }

    /// Serialises to the edge-list text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.m());
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            match &self.edge_activity[e] {
                Some(x) => out.push_str(&format!("{a} {b} {}\n", fmt_rational(x))),
                None => out.push_str(&format!("{a} {b}\n")),
            }
        }
        for (v, act) in self.vertex_activity.iter().enumerate() {
            if let Some(x) = act {
                out.push_str(&format!("V {v} {}\n", fmt_rational(x)));
            }
        }
        out
    }
}

/// Largest neighbourhood met by greedy min-degree elimination of the simple
/// graph underlying `edges`.
pub(crate) fn elimination_width(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> usize {
    elimination_order(n, edges).1
}

/// Greedy min-degree order (ties by smallest index) and its width.
pub(crate) fn elimination_order(
    n: usize,
    edges: impl Iterator<Item = (usize, usize)>,
) -> (Vec<usize>, usize) {
    use std::collections::BTreeSet;
    let mut nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (a, b) in edges {
        if a != b {
            nbrs[a].insert(b);
            nbrs[b].insert(a);
        }
    }
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    let mut width = 0;
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (nbrs[v].len(), v))
            .unwrap();
        let ns: Vec<usize> = nbrs[v].iter().copied().collect();
        width = width.max(ns.len());
        for &a in &ns {
            nbrs[a].remove(&v);
            for &b in &ns {
                if a != b {
                    nbrs[a].insert(b);
                }
            }
        }
        nbrs[v].clear();
        alive[v] = false;
        order.push(v);
    }
    (order, width)
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    out
}

fn parse_index(tok: &Token<'_>, line: usize, what: &str) -> Result<usize> {
    tok.text
        .parse::<usize>()
        .map_err(|_| parse_error(line, tok.column, format!("expected {what}, found '{}'", tok.text)))
}

fn parse_activity(tok: &Token<'_>, line: usize) -> Result<Rational> {
    parse_rational(tok.text).map_err(|e| {
        parse_error(
            line,
            tok.column + e.column - 1,
            format!("malformed activity '{}': {}", tok.text, e.message),
        )
    })
}

/// Parses `n m`, then `m` lines `u v [activity]`, then optional `V u activity`
/// lines. Blank lines and `#` comments are ignored.
pub fn parse_graph(text: &str) -> Result<Multigraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("")))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_error(1, 1, "missing header line 'n m'"))?;
    let head = tokens(header);
    if head.len() != 2 {
        return Err(parse_error(hline, 1, "header must be 'n m'"));
    }
    let n = parse_index(&head[0], hline, "vertex count")?;
    let m = parse_index(&head[1], hline, "edge count")?;
    let mut g = Multigraph::new(n);
    let mut edges_read = 0;
    for (lno, line) in lines {
        let toks = tokens(line);
        if toks[0].text == "V" {
            if edges_read < m {
                return Err(parse_error(lno, 1, format!("expected {m} edges before vertex activities, found {edges_read}")));
            }
            if toks.len() != 3 {
                return Err(parse_error(lno, 1, "vertex activity line must be 'V u activity'"));
            }
            let v = parse_index(&toks[1], lno, "vertex index")?;
            if v >= n {
                return Err(parse_error(lno, toks[1].column, format!("vertex {v} out of range")));
            }
            g.set_vertex_activity(v, Some(parse_activity(&toks[2], lno)?));
            continue;
        }
        if edges_read == m {
            return Err(parse_error(lno, 1, "more edge lines than declared"));
        }
        if toks.len() < 2 || toks.len() > 3 {
            return Err(parse_error(lno, 1, "edge line must be 'u v [activity]'"));
        }
        let u = parse_index(&toks[0], lno, "vertex index")?;
        let v = parse_index(&toks[1], lno, "vertex index")?;
        if u >= n || v >= n {
            let col = if u >= n { toks[0].column } else { toks[1].column };
            return Err(parse_error(lno, col, "vertex index out of range"));
        }
        let e = g
            .add_edge(u, v)
            .map_err(|err| parse_error(lno, 1, err.to_string()))?;
        if toks.len() == 3 {
            g.set_edge_activity(e, Some(parse_activity(&toks[2], lno)?));
        }
        edges_read += 1;
    }
    if edges_read != m {
        return Err(parse_error(
            text.lines().count().max(1),
            1,
            format!("declared {m} edges, found {edges_read}"),
        ));
    }
    Ok(g)
}

/// A vertex set together with an edge set of a fixed host graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub vertices: Vec<bool>,
    pub edges: Vec<bool>,
}

impl Subgraph {
    pub fn whole(g: &Multigraph) -> Self {
        Subgraph {
            vertices: vec![true; g.n()],
            edges: vec![true; g.m()],
        }
    }

    pub fn empty(g: &Multigraph) -> Self {
        Subgraph {
            vertices: vec![false; g.n()],
            edges: vec![false; g.m()],
        }
    }

    /// The chosen edges and their endpoints.
    pub fn from_edges(g: &Multigraph, edges: &[usize]) -> Self {
        let mut s = Subgraph::empty(g);
        for &e in edges {
            s.edges[e] = true;
            let (a, b) = g.edge(e);
            s.vertices[a] = true;
            s.vertices[b] = true;
        }
        s
    }

    /// The chosen vertices and every edge with both ends among them.
    pub fn induced(g: &Multigraph, vertices: &[usize]) -> Self {
        let mut s = Subgraph::empty(g);
        for &v in vertices {
            s.vertices[v] = true;
        }
        for (e, &(a, b)) in g.edges().iter().enumerate() {
            s.edges[e] = s.vertices[a] && s.vertices[b];
        }
        s
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.iter().filter(|&&x| x).count()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&x| x).count()
    }

    pub fn check(&self, g: &Multigraph) -> Result<()> {
        if self.vertices.len() != g.n() || self.edges.len() != g.m() {
            return Err(Error::invalid("subgraph does not match host graph size"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn round_trips_text_format() {
        let text = "3 2\n0 1 2/3\n1 2\nV 2 1/2\n";
        let g = parse_graph(text).unwrap();
        assert_eq!(g.edge_activity(0), Some(&ratio(2, 3)));
        assert_eq!(g.vertex_activity(2), Some(&ratio(1, 2)));
        assert_eq!(g.to_text(), text);
    }

    #[test]
    fn malformed_activity_points_at_character() {
        let err = parse_graph("2 1\n0 1 2//3\n").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn edge_count_mismatch_is_rejected() {
        assert!(parse_graph("2 2\n0 1\n").is_err());
        assert!(parse_graph("2 1\n0 1\n1 0\n").is_err());
        assert!(parse_graph("2 1\n0 0\n").is_err());
    }

    #[test]
    fn series_parallel_detection() {
        let k4 = Multigraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert!(!k4.is_series_parallel());
        let c5 = Multigraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        assert!(c5.is_series_parallel());
        assert!(c5.bipartition().is_none());
    }
}
