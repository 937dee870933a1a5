//! Structural program differences: an edit script that rebuilds the new
//! program, and a tree edit distance used to rank candidate changes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Binding, Directive, Expr, FieldRef, ParameterSpec, PathPart, PathTarget, ScaleDomain, TemplateProgram};
use crate::geom::fmt_num;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit<T> {
    Keep { count: usize },
    Remove { count: usize },
    Insert { items: Vec<T> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgramDiff {
    pub params: Vec<Edit<ParameterSpec>>,
    pub scales: Vec<Edit<crate::dsl::ScaleDef>>,
    pub directives: Vec<Edit<Directive>>,
    pub schema: Vec<Edit<crate::data::Column>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("the diff does not fit the program: {0}")]
pub struct DiffMismatch(String);

fn edits<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Vec<Edit<T>> {
    let (n, m) = (a.len(), b.len());
    // lcs[i][j] = LCS length of a[i..] and b[j..]
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] { lcs[i + 1][j + 1] + 1 } else { lcs[i + 1][j].max(lcs[i][j + 1]) };
        }
    }
    let mut out: Vec<Edit<T>> = Vec::new();
    let mut push = |e: Edit<T>| match (out.last_mut(), e) {
        (Some(Edit::Keep { count }), Edit::Keep { count: c }) => *count += c,
        (Some(Edit::Remove { count }), Edit::Remove { count: c }) => *count += c,
        (Some(Edit::Insert { items }), Edit::Insert { items: more }) => items.extend(more),
        (_, e) => out.push(e),
    };
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            push(Edit::Keep { count: 1 });
            i += 1;
            j += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            push(Edit::Insert { items: vec![b[j].clone()] });
            j += 1;
        } else {
            push(Edit::Remove { count: 1 });
            i += 1;
        }
    }
    out
}

fn replay<T: Clone>(list: &[T], script: &[Edit<T>], what: &str) -> Result<Vec<T>, DiffMismatch> {
    let mut out = Vec::new();
    let mut at = 0;
    for e in script {
        match e {
            Edit::Keep { count } | Edit::Remove { count } => {
                let end = at + count;
                let slice = list.get(at..end).ok_or_else(|| DiffMismatch(format!("{what} list too short")))?;
                if matches!(e, Edit::Keep { .. }) {
                    out.extend_from_slice(slice);
                }
                at = end;
            }
            Edit::Insert { items } => out.extend(items.iter().cloned()),
        }
    }
    if at != list.len() {
        return Err(DiffMismatch(format!("{what} list too long")));
    }
    Ok(out)
}

fn unchanged<T>(script: &[Edit<T>]) -> bool {
    script.iter().all(|e| matches!(e, Edit::Keep { .. }))
}

impl ProgramDiff {
    pub fn between(before: &TemplateProgram, after: &TemplateProgram) -> Self {
        ProgramDiff {
            params: edits(&before.params, &after.params),
            scales: edits(&before.scales, &after.scales),
            directives: edits(&before.directives, &after.directives),
            schema: edits(&before.required_schema, &after.required_schema),
        }
    }

    pub fn is_empty(&self) -> bool {
        unchanged(&self.params) && unchanged(&self.scales) && unchanged(&self.directives) && unchanged(&self.schema)
    }

    pub fn apply(&self, before: &TemplateProgram) -> Result<TemplateProgram, DiffMismatch> {
        Ok(TemplateProgram {
            params: replay(&before.params, &self.params, "parameter")?,
            scales: replay(&before.scales, &self.scales, "scale")?,
            directives: replay(&before.directives, &self.directives, "directive")?,
            required_schema: replay(&before.required_schema, &self.schema, "column")?,
        })
    }
}

/// Labelled ordered tree.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Node {
    pub label: String,
    pub children: Vec<Node>,
}

impl Node {
    fn leaf(label: impl Into<String>) -> Self {
        Node { label: label.into(), children: Vec::new() }
    }

    fn branch(label: impl Into<String>, children: Vec<Node>) -> Self {
        Node { label: label.into(), children }
    }

    #[cfg(test)]
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Node::size).sum::<usize>()
    }
}

fn field_label(f: &FieldRef) -> String {
    match f {
        FieldRef::Column(c) => format!("field {c}"),
        FieldRef::Param(p) => format!("field-of {p}"),
    }
}

fn expr_tree(e: &Expr) -> Node {
    match e {
        Expr::Num(v) => Node::leaf(fmt_num(*v)),
        Expr::Str(s) => Node::leaf(format!("{s:?}")),
        Expr::Color(c) => Node::leaf(c.clone()),
        Expr::Ident(i) => Node::leaf(i.clone()),
        Expr::Field(f) => Node::leaf(field_label(f)),
        Expr::Scale(id, x) => Node::branch(format!("scale {id}"), vec![expr_tree(x)]),
        Expr::Bandwidth(id) => Node::leaf(format!("bandwidth {id}")),
        Expr::Arith(op, xs) => Node::branch(op.symbol(), xs.iter().map(expr_tree).collect()),
        Expr::Concat(xs) => Node::branch("concat", xs.iter().map(expr_tree).collect()),
        Expr::Compare(op, a, b) => Node::branch(op.symbol(), vec![expr_tree(a), expr_tree(b)]),
        Expr::If(c, t, f) => Node::branch("if", vec![expr_tree(c), expr_tree(t), expr_tree(f)]),
        Expr::Call(func, xs) => Node::branch(func.name(), xs.iter().map(expr_tree).collect()),
    }
}

fn bindings_tree(bs: &[Binding]) -> Vec<Node> {
    bs.iter().map(|b| Node::branch(b.attr.clone(), vec![expr_tree(&b.expr)])).collect()
}

fn part_tree(p: &PathPart) -> Node {
    match p {
        PathPart::Lit(s) => Node::leaf(format!("{s:?}")),
        PathPart::Hole(e) => expr_tree(e),
        PathPart::Each(ps) => Node::branch("each", ps.iter().map(part_tree).collect()),
    }
}

fn directive_tree(d: &Directive) -> Node {
    match d {
        Directive::ForEachRow(ds) => Node::branch("for-each-row", ds.iter().map(directive_tree).collect()),
        Directive::Emit { tag, bindings } => Node::branch(format!("emit {tag}"), bindings_tree(bindings)),
        Directive::ReplaceSlot { slot, body } => {
            Node::branch(format!("replace-slot {slot}"), body.iter().map(directive_tree).collect())
        }
        Directive::Set { id, attr, expr } => Node::branch(format!("set {id} {attr}"), vec![expr_tree(expr)]),
        Directive::Clone { id, bindings } => Node::branch(format!("clone {id}"), bindings_tree(bindings)),
        Directive::Path { target, attr, parts } => {
            let target = match target {
                PathTarget::Element(id) => Node::leaf(format!("element {id}")),
                PathTarget::Emit { tag, bindings } => Node::branch(format!("emit {tag}"), bindings_tree(bindings)),
            };
            let mut children = vec![target];
            children.extend(parts.iter().map(part_tree));
            Node::branch(format!("path {attr}"), children)
        }
    }
}

fn param_label(p: &ParameterSpec) -> String {
    serde_json::to_string(p).expect("parameters serialize")
}

/// Tree of a program. Parameters named in `skip` are left out.
pub(crate) fn program_tree(p: &TemplateProgram, skip: &BTreeSet<&str>) -> Node {
    let params = p.params.iter().filter(|x| !skip.contains(x.name.as_str())).map(|x| Node::leaf(param_label(x)));
    let scales = p.scales.iter().map(|s| {
        let domain = match &s.domain {
            ScaleDomain::Values(xs) => Node::branch("domain", xs.iter().map(expr_tree).collect()),
            ScaleDomain::Field(f) => Node::branch("domain", vec![Node::leaf(field_label(f))]),
        };
        let range = Node::branch("range", s.range.iter().map(expr_tree).collect());
        Node::branch(format!("scale {} {} {}", s.id, s.kind.keyword(), fmt_num(s.padding)), vec![domain, range])
    });
    let schema = p.required_schema.iter().map(|c| Node::leaf(format!("column {} {}", c.name, c.kind)));
    Node::branch(
        "template",
        vec![
            Node::branch("params", params.collect()),
            Node::branch("scales", scales.collect()),
            Node::branch("directives", p.directives.iter().map(directive_tree).collect()),
            Node::branch("schema", schema.collect()),
        ],
    )
}

struct Postorder<'a> {
    labels: Vec<&'a str>,
    leftmost: Vec<usize>,
}

fn postorder(root: &Node) -> Postorder<'_> {
    fn walk<'a>(n: &'a Node, out: &mut Postorder<'a>) -> usize {
        let mut first = None;
        for c in &n.children {
            let lm = walk(c, out);
            first.get_or_insert(lm);
        }
        let me = out.labels.len();
        out.labels.push(&n.label);
        out.leftmost.push(first.unwrap_or(me));
        out.leftmost[me]
    }
    let mut out = Postorder { labels: Vec::new(), leftmost: Vec::new() };
    walk(root, &mut out);
    out
}

fn keyroots(t: &Postorder<'_>) -> Vec<usize> {
    let n = t.labels.len();
    (0..n).filter(|&i| (i + 1..n).all(|j| t.leftmost[j] != t.leftmost[i])).collect()
}

/// Unit-cost tree edit distance (Zhang and Shasha).
pub(crate) fn tree_distance(a: &Node, b: &Node) -> usize {
    let (ta, tb) = (postorder(a), postorder(b));
    let (n, m) = (ta.labels.len(), tb.labels.len());
    let mut td = vec![vec![0usize; m]; n];
    for &i in &keyroots(&ta) {
        for &j in &keyroots(&tb) {
            let (li, lj) = (ta.leftmost[i], tb.leftmost[j]);
            let (rows, cols) = (i - li + 2, j - lj + 2);
            let mut fd = vec![vec![0usize; cols]; rows];
            for x in 1..rows {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..cols {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..rows {
                for y in 1..cols {
                    let (ai, bj) = (li + x - 1, lj + y - 1);
                    let del = fd[x - 1][y] + 1;
                    let ins = fd[x][y - 1] + 1;
                    if ta.leftmost[ai] == li && tb.leftmost[bj] == lj {
                        let relabel = fd[x - 1][y - 1] + usize::from(ta.labels[ai] != tb.labels[bj]);
                        fd[x][y] = del.min(ins).min(relabel);
                        td[ai][bj] = fd[x][y];
                    } else {
                        let px = ta.leftmost[ai] - li;
                        let py = tb.leftmost[bj] - lj;
                        fd[x][y] = del.min(ins).min(fd[px][py] + td[ai][bj]);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}

/// `(nodes_changed, params_added)`: tree edits outside the new parameters,
/// and the number of parameters `after` declares that `before` does not.
pub fn minimal_change_score(before: &TemplateProgram, after: &TemplateProgram) -> (usize, usize) {
    let old: BTreeSet<&str> = before.params.iter().map(|p| p.name.as_str()).collect();
    let added: BTreeSet<&str> = after.params.iter().map(|p| p.name.as_str()).filter(|n| !old.contains(n)).collect();
    let nodes = tree_distance(&program_tree(before, &BTreeSet::new()), &program_tree(after, &added));
    (nodes, added.len())
}
