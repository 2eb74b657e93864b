//! Plain-text mesh format.
//!
//! ```text
//! # perforate mesh v1
//! vertices <N>
//! <x> <y>                      N lines, shortest round-trip decimals
//! triangles <T>
//! <a> <b> <c>                  T lines, counterclockwise, 0-based
//! edges <E>
//! <a> <b> <tag>                domain on the left of a -> b
//! circles <C>
//! <tag> <cx> <cy> <r>
//! periodic none | periodic <xmin> <ymin> <xmax> <ymax>
//! ```
//!
//! Tags are `outer_dirichlet`, `outer_neumann`, `periodic`, `cavity_dirichlet:<k>`,
//! `cavity_neumann:<k>` and `cavity_robin:<k>`. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{BoundaryCircle, BoundaryEdge, BoundaryTag, Mesh, MeshError, PeriodicBox};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut out: W) -> std::io::Result<()> {
    let mut s = String::new();
    s.push_str("# perforate mesh v1\n");
    let _ = writeln!(s, "vertices {}", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "edges {}", mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let _ = writeln!(s, "{} {} {}", e.v[0], e.v[1], e.tag);
    }
    let _ = writeln!(s, "circles {}", mesh.circles.len());
    for c in &mesh.circles {
        let _ = writeln!(s, "{} {} {} {}", c.tag, c.center[0], c.center[1], c.radius);
    }
    match mesh.periodic {
        None => s.push_str("periodic none\n"),
        Some(p) => {
            let _ = writeln!(s, "periodic {} {} {} {}", p.min[0], p.min[1], p.max[0], p.max[1]);
        }
    }
    out.write_all(s.as_bytes())
}

/// Companion value table: one `<x> <y> <value>` line per vertex.
pub fn write_values<W: Write>(mesh: &Mesh, values: &[f64], mut out: W) -> std::io::Result<()> {
    let mut s = String::from("# x y value\n");
    for (p, v) in mesh.vertices.iter().zip(values) {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], v);
    }
    out.write_all(s.as_bytes())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_tokens(&mut self) -> Result<Vec<String>, MeshError> {
        loop {
            let Some(l) = self.inner.next() else {
                return Err(MeshError::Parse { line: self.line + 1, msg: "unexpected end of file".into() });
            };
            self.line += 1;
            let l = l?;
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.split_whitespace().map(String::from).collect());
        }
    }

    fn err(&self, msg: impl Into<String>) -> MeshError {
        MeshError::Parse { line: self.line, msg: msg.into() }
    }

    fn header(&mut self, name: &str) -> Result<usize, MeshError> {
        let t = self.next_tokens()?;
        if t.len() != 2 || t[0] != name {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        t[1].parse().map_err(|_| self.err(format!("bad {name} count")))
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T, MeshError> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }
}

pub fn read_mesh<R: BufRead>(input: R) -> Result<Mesh, MeshError> {
    let mut r = Lines { inner: input.lines(), line: 0 };
    let n = r.header("vertices")?;
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let t = r.next_tokens()?;
        if t.len() != 2 {
            return Err(r.err("expected `x y`"));
        }
        vertices.push([r.parse(&t[0])?, r.parse(&t[1])?]);
    }
    let n = r.header("triangles")?;
    let mut triangles = Vec::with_capacity(n);
    for _ in 0..n {
        let t = r.next_tokens()?;
        if t.len() != 3 {
            return Err(r.err("expected three vertex indices"));
        }
        let tri: [usize; 3] = [r.parse(&t[0])?, r.parse(&t[1])?, r.parse(&t[2])?];
        if tri.iter().any(|&i| i >= vertices.len()) {
            return Err(r.err("vertex index out of range"));
        }
        triangles.push(tri);
    }
    let n = r.header("edges")?;
    let mut boundary_edges = Vec::with_capacity(n);
    for _ in 0..n {
        let t = r.next_tokens()?;
        if t.len() != 3 {
            return Err(r.err("expected `a b tag`"));
        }
        let tag: BoundaryTag = t[2].parse().map_err(|e: String| r.err(e))?;
        boundary_edges.push(BoundaryEdge { v: [r.parse(&t[0])?, r.parse(&t[1])?], tag });
    }
    let n = r.header("circles")?;
    let mut circles = Vec::with_capacity(n);
    for _ in 0..n {
        let t = r.next_tokens()?;
        if t.len() != 4 {
            return Err(r.err("expected `tag cx cy r`"));
        }
        let tag: BoundaryTag = t[0].parse().map_err(|e: String| r.err(e))?;
        circles.push(BoundaryCircle { tag, center: [r.parse(&t[1])?, r.parse(&t[2])?], radius: r.parse(&t[3])? });
    }
    let t = r.next_tokens()?;
    let periodic = match t.as_slice() {
        [p, none] if p == "periodic" && none == "none" => None,
        [p, a, b, c, d] if p == "periodic" => Some(PeriodicBox {
            min: [r.parse(a)?, r.parse(b)?],
            max: [r.parse(c)?, r.parse(d)?],
        }),
        _ => return Err(r.err("expected `periodic none` or `periodic xmin ymin xmax ymax`")),
    };
    Ok(Mesh { vertices, triangles, boundary_edges, circles, periodic })
}
