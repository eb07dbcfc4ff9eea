//! Borrowing traversal helpers over the parser's AST.

use rustpython_parser::ast::{self, Expr, Stmt};

/// Expressions evaluated by `stmt` itself (nested bodies excluded), in
/// textual order.
pub(crate) fn own_exprs(stmt: &Stmt) -> Vec<&Expr> {
    let mut out: Vec<&Expr> = Vec::new();
    match stmt {
        Stmt::FunctionDef(f) => {
            out.extend(f.decorator_list.iter());
            out.extend(arg_defaults(&f.args));
        }
        Stmt::AsyncFunctionDef(f) => {
            out.extend(f.decorator_list.iter());
            out.extend(arg_defaults(&f.args));
        }
        Stmt::ClassDef(c) => {
            out.extend(c.decorator_list.iter());
            out.extend(c.bases.iter());
            out.extend(c.keywords.iter().map(|k| &k.value));
        }
        Stmt::Return(r) => out.extend(r.value.as_deref()),
        Stmt::Delete(d) => out.extend(d.targets.iter()),
        Stmt::Assign(a) => {
            out.extend(a.targets.iter());
            out.push(&a.value);
        }
        Stmt::AugAssign(a) => {
            out.push(&a.target);
            out.push(&a.value);
        }
        Stmt::AnnAssign(a) => {
            out.push(&a.target);
            out.extend(a.value.as_deref());
        }
        Stmt::For(f) => {
            out.push(&f.target);
            out.push(&f.iter);
        }
        Stmt::AsyncFor(f) => {
            out.push(&f.target);
            out.push(&f.iter);
        }
        Stmt::While(w) => out.push(&w.test),
        Stmt::If(i) => out.push(&i.test),
        Stmt::With(w) => with_items(&w.items, &mut out),
        Stmt::AsyncWith(w) => with_items(&w.items, &mut out),
        Stmt::Match(m) => {
            out.push(&m.subject);
            out.extend(m.cases.iter().filter_map(|c| c.guard.as_deref()));
        }
        Stmt::Raise(r) => {
            out.extend(r.exc.as_deref());
            out.extend(r.cause.as_deref());
        }
        Stmt::Try(t) => out.extend(handler_types(&t.handlers)),
        Stmt::TryStar(t) => out.extend(handler_types(&t.handlers)),
        Stmt::Assert(a) => {
            out.push(&a.test);
            out.extend(a.msg.as_deref());
        }
        Stmt::Expr(e) => out.push(&e.value),
        Stmt::TypeAlias(t) => out.push(&t.value),
        Stmt::Import(_)
        | Stmt::ImportFrom(_)
        | Stmt::Global(_)
        | Stmt::Nonlocal(_)
        | Stmt::Pass(_)
        | Stmt::Break(_)
        | Stmt::Continue(_) => {}
    }
    out
}

fn with_items<'a>(items: &'a [ast::WithItem], out: &mut Vec<&'a Expr>) {
    for item in items {
        out.push(&item.context_expr);
        out.extend(item.optional_vars.as_deref());
    }
}

fn handler_types(handlers: &[ast::ExceptHandler]) -> impl Iterator<Item = &Expr> {
    handlers.iter().filter_map(|h| {
        let ast::ExceptHandler::ExceptHandler(h) = h;
        h.type_.as_deref()
    })
}

fn arg_defaults(args: &ast::Arguments) -> impl Iterator<Item = &Expr> {
    args.posonlyargs
        .iter()
        .chain(args.args.iter())
        .chain(args.kwonlyargs.iter())
        .filter_map(|a| a.default.as_deref())
}

/// Statement sequences nested in `stmt`, in textual order.
pub(crate) fn child_bodies(stmt: &Stmt) -> Vec<&[Stmt]> {
    match stmt {
        Stmt::FunctionDef(f) => vec![&f.body],
        Stmt::AsyncFunctionDef(f) => vec![&f.body],
        Stmt::ClassDef(c) => vec![&c.body],
        Stmt::For(f) => vec![&f.body, &f.orelse],
        Stmt::AsyncFor(f) => vec![&f.body, &f.orelse],
        Stmt::While(w) => vec![&w.body, &w.orelse],
        Stmt::If(i) => vec![&i.body, &i.orelse],
        Stmt::With(w) => vec![&w.body],
        Stmt::AsyncWith(w) => vec![&w.body],
        Stmt::Match(m) => m.cases.iter().map(|c| c.body.as_slice()).collect(),
        Stmt::Try(t) => try_bodies(&t.body, &t.handlers, &t.orelse, &t.finalbody),
        Stmt::TryStar(t) => try_bodies(&t.body, &t.handlers, &t.orelse, &t.finalbody),
        _ => Vec::new(),
    }
}

fn try_bodies<'a>(
    body: &'a [Stmt],
    handlers: &'a [ast::ExceptHandler],
    orelse: &'a [Stmt],
    finalbody: &'a [Stmt],
) -> Vec<&'a [Stmt]> {
    let mut out = vec![body];
    for h in handlers {
        let ast::ExceptHandler::ExceptHandler(h) = h;
        out.push(&h.body);
    }
    out.push(orelse);
    out.push(finalbody);
    out
}

/// Direct sub-expressions of `expr`, in textual order.
pub(crate) fn child_exprs(expr: &Expr) -> Vec<&Expr> {
    let mut out: Vec<&Expr> = Vec::new();
    match expr {
        Expr::BoolOp(e) => out.extend(e.values.iter()),
        Expr::NamedExpr(e) => {
            out.push(&e.target);
            out.push(&e.value);
        }
        Expr::BinOp(e) => {
            out.push(&e.left);
            out.push(&e.right);
        }
        Expr::UnaryOp(e) => out.push(&e.operand),
        Expr::Lambda(e) => {
            out.extend(arg_defaults(&e.args));
            out.push(&e.body);
        }
        Expr::IfExp(e) => {
            out.push(&e.body);
            out.push(&e.test);
            out.push(&e.orelse);
        }
        Expr::Dict(e) => {
            for (k, v) in e.keys.iter().zip(e.values.iter()) {
                out.extend(k.as_ref());
                out.push(v);
            }
        }
        Expr::Set(e) => out.extend(e.elts.iter()),
        Expr::ListComp(e) => {
            out.push(&e.elt);
            comprehensions(&e.generators, &mut out);
        }
        Expr::SetComp(e) => {
            out.push(&e.elt);
            comprehensions(&e.generators, &mut out);
        }
        Expr::DictComp(e) => {
            out.push(&e.key);
            out.push(&e.value);
            comprehensions(&e.generators, &mut out);
        }
        Expr::GeneratorExp(e) => {
            out.push(&e.elt);
            comprehensions(&e.generators, &mut out);
        }
        Expr::Await(e) => out.push(&e.value),
        Expr::Yield(e) => out.extend(e.value.as_deref()),
        Expr::YieldFrom(e) => out.push(&e.value),
        Expr::Compare(e) => {
            out.push(&e.left);
            out.extend(e.comparators.iter());
        }
        Expr::Call(e) => {
            out.push(&e.func);
            out.extend(e.args.iter());
            out.extend(e.keywords.iter().map(|k| &k.value));
        }
        Expr::FormattedValue(e) => {
            out.push(&e.value);
            out.extend(e.format_spec.as_deref());
        }
        Expr::JoinedStr(e) => out.extend(e.values.iter()),
        Expr::Attribute(e) => out.push(&e.value),
        Expr::Subscript(e) => {
            out.push(&e.value);
            out.push(&e.slice);
        }
        Expr::Starred(e) => out.push(&e.value),
        Expr::List(e) => out.extend(e.elts.iter()),
        Expr::Tuple(e) => out.extend(e.elts.iter()),
        Expr::Slice(e) => {
            out.extend(e.lower.as_deref());
            out.extend(e.upper.as_deref());
            out.extend(e.step.as_deref());
        }
        Expr::Constant(_) | Expr::Name(_) => {}
    }
    out
}

fn comprehensions<'a>(gens: &'a [ast::Comprehension], out: &mut Vec<&'a Expr>) {
    for g in gens {
        out.push(&g.target);
        out.push(&g.iter);
        out.extend(g.ifs.iter());
    }
}

/// Visit every expression (pre-order) in `body`, including nested bodies.
pub(crate) fn for_each_expr<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    for stmt in body {
        for e in own_exprs(stmt) {
            visit_expr(e, f);
        }
        for child in child_bodies(stmt) {
            for_each_expr(child, f);
        }
    }
}

pub(crate) fn visit_expr<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(expr);
    for c in child_exprs(expr) {
        visit_expr(c, f);
    }
}

/// Visit every statement (pre-order), including nested bodies.
pub(crate) fn for_each_stmt<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for stmt in body {
        f(stmt);
        for child in child_bodies(stmt) {
            for_each_stmt(child, f);
        }
    }
}

/// Final name segment and as-written text of a call's callee. `None` for
/// callees that are not a name or attribute (`f(x)(y)`, `fs[0](y)`).
pub(crate) fn callee_names(call: &ast::ExprCall, source: &str) -> Option<(String, String)> {
    let name = match call.func.as_ref() {
        Expr::Name(n) => n.id.to_string(),
        Expr::Attribute(a) => a.attr.to_string(),
        _ => return None,
    };
    let range = ast::Ranged::range(call.func.as_ref());
    let text = &source[range.start().to_usize()..range.end().to_usize()];
    let qualified: String = text.split_whitespace().collect();
    Some((name, qualified))
}

/// Byte offset where the callee's final name segment starts.
pub(crate) fn callee_name_offset(call: &ast::ExprCall) -> u32 {
    let range = ast::Ranged::range(call.func.as_ref());
    match call.func.as_ref() {
        Expr::Attribute(a) => range.end().to_u32() - a.attr.as_str().len() as u32,
        _ => range.start().to_u32(),
    }
}
