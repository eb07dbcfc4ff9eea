//! Forward taint propagation from one data source.
//!
//! The scope enclosing the source is walked once, in source order. Loop and
//! branch bodies are visited a single time; nested function and class
//! bodies, lambdas and comprehensions are opaque. The result is therefore a
//! subset of what the script does at runtime, never a superset.

use std::collections::{BTreeSet, HashMap};

use rustpython_parser::ast::{self, Expr, Ranged, Stmt};

use super::parse::ParsedScript;
use super::sources::binding_hints;
use super::walk;
use super::{
    AnalysisConfig, DataSource, OperationEvent, OperationRole, ProvenanceChain, SinkEvent,
    SOURCE_JUSTIFICATION,
};

/// Build the provenance chain for `source`.
pub fn trace_operations(
    script: &ParsedScript,
    source: &DataSource,
    config: &AnalysisConfig,
) -> ProvenanceChain {
    let mut tracer = Tracer {
        script,
        config,
        source_start: source.span.start,
        source_end: source.span.end,
        hints: binding_hints(script.statements()),
        tainted: BTreeSet::new(),
        operations: Vec::new(),
        sinks: Vec::new(),
    };
    if script.parse_ok {
        let scope = enclosing_scope(script.statements(), source.span.start);
        tracer.block(scope);
    }
    let mut operations = tracer.operations;
    operations.sort_by_key(|o| (o.end, o.location));
    let mut sinks = tracer.sinks;
    sinks.sort_by_key(|s| s.location);
    ProvenanceChain {
        id: format!("{}:{}:{}", script.script_path, source.location.line, source.location.column),
        package_doi: script.package_doi.clone(),
        script_path: script.script_path.clone(),
        source: source.clone(),
        operations,
        sink_outputs: sinks,
    }
}

/// Body of the innermost function or class containing `offset`, or the
/// module body.
fn enclosing_scope(module: &[Stmt], offset: u32) -> &[Stmt] {
    let mut best: Option<(u32, &[Stmt])> = None;
    walk::for_each_stmt(module, &mut |stmt| {
        let body: &[Stmt] = match stmt {
            Stmt::FunctionDef(f) => &f.body,
            Stmt::AsyncFunctionDef(f) => &f.body,
            Stmt::ClassDef(c) => &c.body,
            _ => return,
        };
        let r = stmt.range();
        if r.start().to_u32() <= offset && offset < r.end().to_u32() {
            let width = r.end().to_u32() - r.start().to_u32();
            if best.map_or(true, |(w, _)| width < w) {
                best = Some((width, body));
            }
        }
    });
    best.map_or(module, |(_, b)| b)
}

type Taint = Option<String>;

struct Tracer<'a> {
    script: &'a ParsedScript,
    config: &'a AnalysisConfig,
    source_start: u32,
    source_end: u32,
    hints: HashMap<u32, String>,
    tainted: BTreeSet<String>,
    operations: Vec<OperationEvent>,
    sinks: Vec<SinkEvent>,
}

impl Tracer<'_> {
    fn block(&mut self, body: &[Stmt]) {
        for stmt in body {
            self.stmt(stmt);
        }
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match stmt {
            Stmt::Expr(e) => {
                self.expr(&e.value);
            }
            Stmt::Assign(a) => self.assign(&a.targets, &a.value),
            Stmt::AnnAssign(a) => {
                if let Some(v) = &a.value {
                    let t = self.expr(v);
                    self.bind(&a.target, t);
                }
            }
            Stmt::AugAssign(a) => {
                let t = self.expr(&a.value);
                match a.target.as_ref() {
                    Expr::Name(n) => {
                        if t.is_some() {
                            self.taint(n.id.as_str());
                        }
                    }
                    other => self.bind(other, t),
                }
            }
            Stmt::For(f) => self.for_loop(&f.target, &f.iter, &f.body, &f.orelse),
            Stmt::AsyncFor(f) => self.for_loop(&f.target, &f.iter, &f.body, &f.orelse),
            Stmt::While(w) => {
                self.expr(&w.test);
                self.block(&w.body);
                self.block(&w.orelse);
            }
            Stmt::If(i) => {
                self.expr(&i.test);
                self.block(&i.body);
                self.block(&i.orelse);
            }
            Stmt::With(w) => self.with(&w.items, &w.body),
            Stmt::AsyncWith(w) => self.with(&w.items, &w.body),
            Stmt::Match(m) => {
                self.expr(&m.subject);
                for case in &m.cases {
                    if let Some(g) = &case.guard {
                        self.expr(g);
                    }
                    self.block(&case.body);
                }
            }
            Stmt::Try(t) => self.try_block(&t.body, &t.handlers, &t.orelse, &t.finalbody),
            Stmt::TryStar(t) => self.try_block(&t.body, &t.handlers, &t.orelse, &t.finalbody),
            Stmt::Return(r) => {
                if let Some(v) = &r.value {
                    if let Some(j) = self.expr(v) {
                        self.sinks.push(SinkEvent {
                            kind: "return".into(),
                            location: self.script.locate(stmt.range().start().to_u32()),
                            justification: j,
                        });
                    }
                }
            }
            Stmt::Delete(d) => {
                for target in &d.targets {
                    match target {
                        Expr::Name(n) => self.untaint(n.id.as_str()),
                        other => {
                            self.expr(other);
                        }
                    }
                }
            }
            Stmt::FunctionDef(f) => {
                self.exprs(walk::own_exprs(stmt));
                self.untaint(f.name.as_str());
            }
            Stmt::AsyncFunctionDef(f) => {
                self.exprs(walk::own_exprs(stmt));
                self.untaint(f.name.as_str());
            }
            Stmt::ClassDef(c) => {
                self.exprs(walk::own_exprs(stmt));
                self.untaint(c.name.as_str());
            }
            Stmt::Import(i) => {
                for alias in &i.names {
                    let bound = match &alias.asname {
                        Some(a) => a.to_string(),
                        None => alias.name.split('.').next().unwrap_or_default().to_string(),
                    };
                    self.untaint(&bound);
                }
            }
            Stmt::ImportFrom(i) => {
                for alias in &i.names {
                    self.untaint(alias.asname.as_ref().unwrap_or(&alias.name).as_str());
                }
            }
            Stmt::Raise(_) | Stmt::Assert(_) | Stmt::TypeAlias(_) => {
                self.exprs(walk::own_exprs(stmt));
            }
            Stmt::Global(_) | Stmt::Nonlocal(_) | Stmt::Pass(_) | Stmt::Break(_) | Stmt::Continue(_) => {}
        }
    }

    fn exprs(&mut self, exprs: Vec<&Expr>) {
        for e in exprs {
            self.expr(e);
        }
    }

    fn assign(&mut self, targets: &[Expr], value: &Expr) {
        if let [target] = targets {
            if let (Some(ts), Some(vs)) = (sequence(target), sequence(value)) {
                if ts.len() == vs.len() && !vs.iter().any(|v| matches!(v, Expr::Starred(_))) {
                    let taints: Vec<Taint> = vs.iter().map(|v| self.expr(v)).collect();
                    for (t, taint) in ts.iter().zip(taints) {
                        self.bind(t, taint);
                    }
                    return;
                }
            }
        }
        let t = self.expr(value);
        for target in targets {
            self.bind(target, t.clone());
        }
    }

    fn bind(&mut self, target: &Expr, taint: Taint) {
        match target {
            Expr::Name(n) => match taint {
                Some(_) => self.taint(n.id.as_str()),
                None => self.untaint(n.id.as_str()),
            },
            Expr::Tuple(t) => t.elts.iter().for_each(|e| self.bind(e, taint.clone())),
            Expr::List(l) => l.elts.iter().for_each(|e| self.bind(e, taint.clone())),
            Expr::Starred(s) => self.bind(&s.value, taint),
            Expr::Subscript(s) => {
                self.expr(&s.slice);
                self.weak_bind(&s.value, taint);
            }
            Expr::Attribute(a) => self.weak_bind(&a.value, taint),
            other => {
                self.expr(other);
            }
        }
    }

    /// Storing into part of an object taints the object but never clears it.
    fn weak_bind(&mut self, base: &Expr, taint: Taint) {
        match base {
            Expr::Name(n) if taint.is_some() => self.taint(n.id.as_str()),
            Expr::Name(_) => {}
            Expr::Subscript(s) => {
                self.expr(&s.slice);
                self.weak_bind(&s.value, taint);
            }
            Expr::Attribute(a) => self.weak_bind(&a.value, taint),
            other => {
                self.expr(other);
            }
        }
    }

    fn for_loop(&mut self, target: &Expr, iter: &Expr, body: &[Stmt], orelse: &[Stmt]) {
        let t = self.expr(iter);
        self.bind(target, t);
        self.block(body);
        self.block(orelse);
    }

    fn with(&mut self, items: &[ast::WithItem], body: &[Stmt]) {
        for item in items {
            let t = self.expr(&item.context_expr);
            if let Some(v) = &item.optional_vars {
                self.bind(v, t);
            }
        }
        self.block(body);
    }

    fn try_block(
        &mut self,
        body: &[Stmt],
        handlers: &[ast::ExceptHandler],
        orelse: &[Stmt],
        finalbody: &[Stmt],
    ) {
        self.block(body);
        for h in handlers {
            let ast::ExceptHandler::ExceptHandler(h) = h;
            if let Some(t) = &h.type_ {
                self.expr(t);
            }
            if let Some(n) = &h.name {
                self.untaint(n.as_str());
            }
            self.block(&h.body);
        }
        self.block(orelse);
        self.block(finalbody);
    }

    fn taint(&mut self, name: &str) {
        self.tainted.insert(name.to_string());
    }

    fn untaint(&mut self, name: &str) {
        self.tainted.remove(name);
    }

    /// Evaluate `expr` for its side events; returns the justification if the
    /// value is derived from the source.
    fn expr(&mut self, expr: &Expr) -> Taint {
        match expr {
            Expr::Name(n) => self.tainted.contains(n.id.as_str()).then(|| n.id.to_string()),
            Expr::Constant(_) => None,
            Expr::Attribute(a) => self.expr(&a.value),
            Expr::Subscript(s) => {
                let t = self.expr(&s.value);
                self.expr(&s.slice);
                t
            }
            Expr::Starred(s) => self.expr(&s.value),
            Expr::NamedExpr(n) => {
                let t = self.expr(&n.value);
                self.bind(&n.target, t.clone());
                t
            }
            Expr::Call(c) => self.call(c),
            // Opaque: bodies run later, elsewhere, or per element.
            Expr::Lambda(_)
            | Expr::ListComp(_)
            | Expr::SetComp(_)
            | Expr::DictComp(_)
            | Expr::GeneratorExp(_) => None,
            other => {
                let mut first = None;
                for child in walk::child_exprs(other) {
                    let t = self.expr(child);
                    if first.is_none() {
                        first = t;
                    }
                }
                first
            }
        }
    }

    fn call(&mut self, call: &ast::ExprCall) -> Taint {
        let start = call.range.start().to_u32();
        let end = call.range.end().to_u32();
        if start == self.source_start && end == self.source_end {
            return Some(SOURCE_JUSTIFICATION.to_string());
        }
        let receiver = match call.func.as_ref() {
            Expr::Attribute(a) => self.expr(&a.value),
            Expr::Name(_) => None,
            other => {
                self.expr(other);
                None
            }
        };
        let mut arg_taint: Taint = None;
        for arg in &call.args {
            let t = self.expr(arg);
            if arg_taint.is_none() {
                arg_taint = t;
            }
        }
        for kw in &call.keywords {
            let t = self.expr(&kw.value);
            if arg_taint.is_none() {
                arg_taint = t;
            }
        }
        let Some((name, qualified_name)) = walk::callee_names(call, self.script.source()) else {
            return None;
        };
        if self.config.loaders.contains(&name) {
            return None;
        }
        let (role, justification) = if let Some(j) = receiver {
            (OperationRole::MethodOnTainted, j)
        } else if let Some(j) = arg_taint {
            if self.config.sinks.contains(&name) {
                self.sinks.push(SinkEvent {
                    kind: name,
                    location: self.script.locate(walk::callee_name_offset(call)),
                    justification: j,
                });
                return None;
            }
            (OperationRole::TaintedAsArgument, j)
        } else {
            return None;
        };
        self.operations.push(OperationEvent {
            name,
            qualified_name,
            role,
            location: self.script.locate(walk::callee_name_offset(call)),
            end: self.script.locate(end),
            result_variable: self.hints.get(&start).cloned(),
            justification: justification.clone(),
        });
        Some(justification)
    }
}

fn sequence(expr: &Expr) -> Option<&[Expr]> {
    match expr {
        Expr::Tuple(t) => Some(&t.elts),
        Expr::List(l) => Some(&l.elts),
        _ => None,
    }
}
