//! DOT and SVG views of a workflow, colored by node status.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use chrono::{DateTime, Local};
use thiserror::Error;

use crate::model::{NodeSpec, Status};
use crate::specfile::{render_label, TimerContext, VariableStore, WorkflowDocument};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("DOT renderer `{program}` not found; install Graphviz (it provides `dot`) or set HYFLOW_DOT")]
    RendererMissing { program: String },
    #[error("rendering failed: {0}")]
    RenderFailed(String),
}

/// Fill color per status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorMap([String; 7]);

impl ColorMap {
    pub fn color(&self, status: Status) -> &str {
        &self.0[Self::slot(status)]
    }

    pub fn set(&mut self, status: Status, color: impl Into<String>) {
        self.0[Self::slot(status)] = color.into();
    }

    fn slot(status: Status) -> usize {
        Status::ALL.iter().position(|s| *s == status).unwrap()
    }
}

impl Default for ColorMap {
    fn default() -> Self {
        ColorMap(
            ["white", "white", "lightblue", "yellow", "green", "red", "orange"].map(String::from),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderOptions {
    pub default_shape: String,
    /// Used when a node's style is absent or empty.
    pub default_style: String,
    pub colors: ColorMap,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            default_shape: "ellipse".into(),
            default_style: "filled".into(),
            colors: ColorMap::default(),
        }
    }
}

/// Values labels may refer to beyond the document itself.
#[derive(Debug, Clone, Default)]
pub struct RenderContext {
    pub now: Option<DateTime<Local>>,
    pub modified: Option<DateTime<Local>>,
    pub vars: VariableStore,
}

/// Clocks visible to one node's label.
pub fn node_clocks(doc: &WorkflowDocument, node: &NodeSpec, ctx: &RenderContext) -> TimerContext {
    TimerContext {
        created: doc.clock.created,
        t0: doc.clock.t0,
        t1: doc.clock.t1,
        now: ctx.now,
        tstart: node.runtime.tstart,
        tend: node.runtime.tend,
        modified: ctx.modified,
    }
}

fn dot_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Bare identifier when DOT allows one, quoted string otherwise.
fn dot_id(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        s.to_string()
    } else {
        dot_string(s)
    }
}

/// Emits a DOT digraph: nodes in topological order with rendered labels and
/// status colors, then edges ordered by source position and target name.
pub fn to_dot(doc: &WorkflowDocument, options: &RenderOptions, ctx: &RenderContext) -> String {
    let order: Vec<String> = doc
        .graph
        .topological_order()
        .unwrap_or_else(|_| doc.graph.names().map(String::from).collect());
    let position: HashMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", dot_string(&doc.name));
    for name in &order {
        let node = doc.graph.node(name).expect("order lists graph nodes");
        let label = render_label(node.label_template(), node, &node_clocks(doc, node, ctx), &ctx.vars);
        let shape = node.shape.as_deref().filter(|s| !s.is_empty()).unwrap_or(&options.default_shape);
        let style = node.style.as_deref().filter(|s| !s.is_empty()).unwrap_or(&options.default_style);
        let _ = writeln!(
            out,
            "  {} [label={} shape={} style={} fillcolor={}];",
            dot_string(name),
            dot_string(&label),
            dot_id(shape),
            dot_id(style),
            dot_id(options.colors.color(node.status)),
        );
    }
    let mut edges: Vec<(&str, &str)> = doc.graph.edges().collect();
    edges.sort_by_key(|(a, b)| (position[a], *b));
    for (a, b) in edges {
        let _ = writeln!(out, "  {} -> {};", dot_string(a), dot_string(b));
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// A self-contained SVG drawing used when no external renderer is
/// installed: nodes in rows by longest-path rank, straight edges with
/// arrowheads, the same labels, shapes and fill colors as [`to_dot`].
pub fn builtin_svg(doc: &WorkflowDocument, options: &RenderOptions, ctx: &RenderContext) -> String {
    const ROW: f64 = 100.0;
    const GAP: f64 = 30.0;
    const CHAR: f64 = 7.5;
    const LINE: f64 = 16.0;

    let graph = &doc.graph;
    let order: Vec<String> = graph
        .topological_order()
        .unwrap_or_else(|_| graph.names().map(String::from).collect());
    let mut rank: HashMap<&str, usize> = HashMap::new();
    for name in &order {
        let r = graph
            .predecessors(name)
            .filter_map(|p| rank.get(p))
            .map(|r| r + 1)
            .max()
            .unwrap_or(0);
        rank.insert(name, r);
    }

    struct Placed {
        lines: Vec<String>,
        width: f64,
        height: f64,
        x: f64,
        y: f64,
        boxed: bool,
        fill: String,
    }
    let rows = rank.values().max().map_or(0, |r| r + 1);
    let mut by_row: Vec<Vec<&str>> = vec![Vec::new(); rows];
    for name in &order {
        by_row[rank[name.as_str()]].push(name);
    }
    let mut placed: HashMap<&str, Placed> = HashMap::new();
    let mut row_widths = Vec::with_capacity(rows);
    for row in &by_row {
        let mut width = 0.0;
        for name in row {
            let node = graph.node(name).expect("order lists graph nodes");
            let label = render_label(node.label_template(), node, &node_clocks(doc, node, ctx), &ctx.vars);
            let lines: Vec<String> = label.lines().map(String::from).collect();
            let longest = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64;
            let shape = node.shape.as_deref().filter(|s| !s.is_empty()).unwrap_or(&options.default_shape);
            let boxed = matches!(shape, "box" | "rect" | "rectangle" | "square" | "record");
            let w = (longest * CHAR + if boxed { 24.0 } else { 40.0 }).max(60.0);
            let h = lines.len().max(1) as f64 * LINE + if boxed { 16.0 } else { 22.0 };
            width += w + GAP;
            placed.insert(
                name,
                Placed {
                    lines,
                    width: w,
                    height: h,
                    x: 0.0,
                    y: 0.0,
                    boxed,
                    fill: options.colors.color(node.status).to_string(),
                },
            );
        }
        row_widths.push(width);
    }
    let canvas_w = row_widths.iter().cloned().fold(0.0, f64::max).max(GAP) + GAP;
    for (r, row) in by_row.iter().enumerate() {
        let mut x = (canvas_w - row_widths[r]) / 2.0 + GAP / 2.0;
        for name in row {
            let p = placed.get_mut(name).expect("placed above");
            p.x = x + p.width / 2.0;
            p.y = GAP + ROW * r as f64 + ROW / 2.0;
            x += p.width + GAP;
        }
    }
    let canvas_h = ROW * rows as f64 + 2.0 * GAP;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{canvas_w:.0}" height="{canvas_h:.0}" viewBox="0 0 {canvas_w:.0} {canvas_h:.0}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", xml_escape(&doc.name));
    out.push_str(r#"<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="8" markerHeight="8" orient="auto"><path d="M0,0 L10,5 L0,10 z"/></marker></defs>"#);
    out.push('\n');
    let mut edges: Vec<(&str, &str)> = graph.edges().collect();
    edges.sort_by_key(|(a, b)| (rank[a], *a, *b));
    for (a, b) in edges {
        let (pa, pb) = (&placed[a], &placed[b]);
        let _ = writeln!(
            out,
            r#"<line class="edge" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" marker-end="url(#arrow)"/>"#,
            pa.x,
            pa.y + pa.height / 2.0,
            pb.x,
            pb.y - pb.height / 2.0
        );
    }
    for name in &order {
        let p = &placed[name.as_str()];
        let _ = writeln!(out, r#"<g class="node" id="{}">"#, xml_escape(name));
        if p.boxed {
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}" stroke="black"/>"#,
                p.x - p.width / 2.0,
                p.y - p.height / 2.0,
                p.width,
                p.height,
                xml_escape(&p.fill)
            );
        } else {
            let _ = writeln!(
                out,
                r#"<ellipse cx="{:.1}" cy="{:.1}" rx="{:.1}" ry="{:.1}" fill="{}" stroke="black"/>"#,
                p.x,
                p.y,
                p.width / 2.0,
                p.height / 2.0,
                xml_escape(&p.fill)
            );
        }
        let first = p.y - (p.lines.len().saturating_sub(1)) as f64 * LINE / 2.0 + 5.0;
        for (i, line) in p.lines.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
                p.x,
                first + i as f64 * LINE,
                xml_escape(line)
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// An external DOT-to-SVG renderer.
#[derive(Debug, Clone)]
pub struct SvgRenderer {
    pub program: PathBuf,
}

impl Default for SvgRenderer {
    fn default() -> Self {
        SvgRenderer { program: "dot".into() }
    }
}

impl SvgRenderer {
    /// `dot`, or the program named by `HYFLOW_DOT`.
    pub fn from_env() -> Self {
        match std::env::var_os("HYFLOW_DOT") {
            Some(p) if !p.is_empty() => SvgRenderer { program: p.into() },
            _ => SvgRenderer::default(),
        }
    }

    /// Pipes `dot` text through the renderer into `output`.
    pub fn render_svg(&self, dot: &str, output: &Path) -> Result<PathBuf, RenderError> {
        let missing = || RenderError::RendererMissing {
            program: self.program.display().to_string(),
        };
        let mut child = Command::new(&self.program)
            .arg("-Tsvg")
            .arg("-o")
            .arg(output)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => missing(),
                _ => RenderError::RenderFailed(e.to_string()),
            })?;
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(dot.as_bytes());
        }
        let out = child
            .wait_with_output()
            .map_err(|e| RenderError::RenderFailed(e.to_string()))?;
        if !out.status.success() {
            return Err(RenderError::RenderFailed(
                String::from_utf8_lossy(&out.stderr).trim().to_string(),
            ));
        }
        match std::fs::metadata(output) {
            Ok(m) if m.len() > 0 => Ok(output.to_path_buf()),
            _ => Err(RenderError::RenderFailed(format!(
                "{} produced no output",
                self.program.display()
            ))),
        }
    }
}
