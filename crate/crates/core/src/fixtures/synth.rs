//! Random Python scripts with known provenance chains.
//!
//! The generator keeps its own model of which variables carry data from the
//! single `read_csv` call and emits, next to the script text, the operation
//! names that the taint rules must report in order. Plain scripts use only
//! constructs the tracer models; salted scripts also contain lambdas,
//! comprehensions and nested functions, whose real effect is recorded in the
//! truth but which the tracer treats as opaque.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const METHODS: &[&str] = &[
    "dropna", "head", "fillna", "abs", "cumsum", "describe", "sort_values", "reset_index", "copy", "round",
    "rank", "diff", "pct_change", "clip", "astype", "sum", "mean", "std", "median", "corr", "groupby", "agg",
    "transform", "merge", "pivot", "tail", "unique", "nunique", "value_counts", "quantile",
];
const NP_FUNCS: &[&str] = &["log", "sqrt", "abs", "cumsum", "corrcoef", "nanmean", "percentile", "exp"];
const BUILTINS: &[&str] = &["len", "sorted", "list", "max", "min"];
const VARS: &[&str] = &["a", "b", "c", "d", "e", "f", "g", "h"];

/// A generated script and what its one chain must contain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthScript {
    pub source: String,
    pub dataset: String,
    /// Expected operation names, in the order the tracer reports them.
    pub operations: Vec<String>,
    /// Whether unsupported constructs were inserted; if so, `operations`
    /// is the full runtime truth, of which extraction may report a subset.
    pub salted: bool,
}

#[derive(Clone)]
struct Value {
    code: String,
    tainted: bool,
    ops: Vec<String>,
}

struct Gen {
    rng: StdRng,
    tainted: BTreeSet<String>,
    lines: Vec<String>,
    ops: Vec<String>,
    salted: bool,
}

/// Generate one script with roughly `statements` top-level statements.
pub fn synth_script(seed: u64, statements: usize, salted: bool) -> SynthScript {
    let mut g = Gen {
        rng: StdRng::seed_from_u64(seed),
        tainted: BTreeSet::new(),
        lines: vec!["import numpy as np".into(), "import pandas as pd".into(), String::new()],
        ops: Vec::new(),
        salted: false,
    };
    let dataset = format!("data_{seed}.csv");
    g.lines.push(format!("df = pd.read_csv('{dataset}')"));
    g.tainted.insert("df".into());
    for v in VARS.iter().take(3) {
        let n = g.rng.gen_range(1..9);
        g.lines.push(format!("{v} = {n}"));
    }
    for _ in 0..statements {
        if salted && g.rng.gen_bool(0.15) {
            g.salt();
        } else {
            g.statement(0);
        }
    }
    if salted && !g.salted {
        g.salt();
    }
    let mut source = g.lines.join("\n");
    source.push('\n');
    SynthScript { source, dataset, operations: g.ops, salted: g.salted }
}

impl Gen {
    fn pick<'a>(&mut self, from: &[&'a str]) -> &'a str {
        from.choose(&mut self.rng).copied().unwrap()
    }

    /// A variable name; tainted ones are preferred so chains grow.
    fn var(&mut self) -> Value {
        let tainted: Vec<String> = self.tainted.iter().cloned().collect();
        let name = if !tainted.is_empty() && self.rng.gen_bool(0.7) {
            tainted.choose(&mut self.rng).unwrap().clone()
        } else {
            self.pick(VARS).to_string()
        };
        Value { tainted: self.tainted.contains(&name), code: name, ops: Vec::new() }
    }

    fn constant(&mut self) -> Value {
        let code = match self.rng.gen_range(0..3) {
            0 => self.rng.gen_range(0..100).to_string(),
            1 => format!("'{}'", self.pick(&["group", "score", "label", "value"])),
            _ => "None".into(),
        };
        Value { code, tainted: false, ops: Vec::new() }
    }

    fn expr(&mut self, depth: u32) -> Value {
        let leaf = depth >= 3 || self.rng.gen_bool(0.3);
        if leaf {
            return if self.rng.gen_bool(0.8) { self.var() } else { self.constant() };
        }
        match self.rng.gen_range(0..6) {
            0 | 1 => {
                let recv = self.expr(depth + 1);
                let name = self.pick(METHODS);
                let args = self.args(depth);
                // `5.abs()` would lex as a float literal.
                let callee = if recv.code.starts_with(|c: char| c.is_ascii_digit()) {
                    format!("({}).{name}", recv.code)
                } else {
                    format!("{}.{name}", recv.code)
                };
                self.call(callee, Some(recv), name, args)
            }
            2 => {
                let name = self.pick(NP_FUNCS);
                let args = self.args(depth);
                self.call(format!("np.{name}"), None, name, args)
            }
            3 => {
                let name = self.pick(BUILTINS);
                let args = vec![(None, self.expr(depth + 1))];
                self.call(name.to_string(), None, name, args)
            }
            4 => {
                let base = self.expr(depth + 1);
                let key = self.pick(&["'score'", "'group'", "0", "1"]);
                Value { code: format!("{}[{key}]", base.code), ..base }
            }
            _ => {
                let (l, r) = (self.expr(depth + 1), self.expr(depth + 1));
                let op = self.pick(&["+", "-", "*", "/"]);
                Value {
                    code: format!("({} {op} {})", l.code, r.code),
                    tainted: l.tainted || r.tainted,
                    ops: [l.ops, r.ops].concat(),
                }
            }
        }
    }

    fn args(&mut self, depth: u32) -> Vec<(Option<&'static str>, Value)> {
        let n = self.rng.gen_range(0..3);
        (0..n)
            .map(|_| {
                let kw = self.rng.gen_bool(0.25).then(|| self.pick(&["axis", "data", "other", "by"]));
                (kw, self.expr(depth + 1))
            })
            .collect()
    }

    /// Receiver first, then arguments, then the call itself: the order in
    /// which the calls end in the source text.
    fn call(&mut self, callee: String, recv: Option<Value>, name: &str, args: Vec<(Option<&str>, Value)>) -> Value {
        let mut ops = Vec::new();
        let mut tainted = false;
        if let Some(r) = &recv {
            ops.extend(r.ops.iter().cloned());
            tainted = r.tainted;
        }
        let mut seen_kw = BTreeSet::new();
        let mut rendered = Vec::new();
        let mut positional_done = false;
        let mut arg_tainted = false;
        for (kw, v) in args {
            ops.extend(v.ops.iter().cloned());
            arg_tainted |= v.tainted;
            match kw {
                Some(k) if seen_kw.insert(k) => {
                    positional_done = true;
                    rendered.push(format!("{k}={}", v.code));
                }
                // Positional after keyword is a syntax error; rename instead.
                _ if positional_done => rendered.push(format!("extra{}={}", rendered.len(), v.code)),
                _ => rendered.push(v.code),
            }
        }
        if tainted || arg_tainted {
            ops.push(name.to_string());
        }
        Value { code: format!("{callee}({})", rendered.join(", ")), tainted: tainted || arg_tainted, ops }
    }

    fn emit(&mut self, indent: usize, line: String, v: &[&Value]) {
        self.lines.push(format!("{}{line}", "    ".repeat(indent)));
        for x in v {
            self.ops.extend(x.ops.iter().cloned());
        }
    }

    fn bind(&mut self, name: &str, tainted: bool) {
        if tainted {
            self.tainted.insert(name.to_string());
        } else {
            self.tainted.remove(name);
        }
    }

    fn statement(&mut self, indent: usize) {
        let target = self.pick(VARS);
        match self.rng.gen_range(0..10) {
            0..=3 => {
                let v = self.expr(0);
                self.emit(indent, format!("{target} = {}", v.code), &[&v]);
                self.bind(target, v.tainted);
            }
            4 => {
                let v = self.expr(0);
                self.emit(indent, format!("print({})", v.code), &[&v]);
            }
            5 => {
                let (x, y) = (self.expr(0), self.expr(0));
                let other = self.pick(VARS);
                if other == target {
                    // `a, a = x, y`: the last binding wins.
                    self.emit(indent, format!("{target}, {other} = {}, {}", x.code, y.code), &[&x, &y]);
                    self.bind(target, y.tainted);
                } else {
                    self.emit(indent, format!("{target}, {other} = {}, {}", x.code, y.code), &[&x, &y]);
                    self.bind(target, x.tainted);
                    self.bind(other, y.tainted);
                }
            }
            6 => {
                let v = self.expr(0);
                self.emit(indent, format!("{target} += {}", v.code), &[&v]);
                if v.tainted {
                    self.tainted.insert(target.to_string());
                }
            }
            7 => {
                let v = self.expr(0);
                self.emit(indent, format!("{target}['out'] = {}", v.code), &[&v]);
                if v.tainted {
                    self.tainted.insert(target.to_string());
                }
            }
            8 if indent < 2 => {
                let v = self.expr(0);
                match self.rng.gen_range(0..3) {
                    0 => {
                        self.emit(indent, format!("if {}:", v.code), &[&v]);
                    }
                    1 => {
                        let loop_var = self.pick(VARS);
                        self.emit(indent, format!("for {loop_var} in {}:", v.code), &[&v]);
                        self.bind(loop_var, v.tainted);
                    }
                    _ => {
                        let alias = self.pick(VARS);
                        self.emit(indent, format!("with {} as {alias}:", v.code), &[&v]);
                        self.bind(alias, v.tainted);
                    }
                }
                let n = self.rng.gen_range(1..4);
                for _ in 0..n {
                    self.statement(indent + 1);
                }
            }
            8 => {
                let v = self.expr(0);
                self.emit(indent, v.code.clone(), &[&v]);
            }
            _ => {
                if self.rng.gen_bool(0.5) {
                    self.emit(indent, format!("del {target}"), &[]);
                    self.tainted.remove(target);
                } else {
                    let v = self.constant();
                    self.emit(indent, format!("{target} = {}", v.code), &[]);
                    self.tainted.remove(target);
                }
            }
        }
    }

    /// An unsupported construct. Its true effect goes into the truth; the
    /// tracer may miss operations but must not invent any.
    fn salt(&mut self) {
        self.salted = true;
        let src = self.var();
        let target = self.pick(VARS);
        let m = self.pick(METHODS);
        match self.rng.gen_range(0..4) {
            0 => {
                self.lines.push(format!("{target} = [item.{m}() for item in {}]", src.code));
                if src.tainted {
                    self.ops.push(m.into());
                }
                self.bind(target, src.tainted);
            }
            1 => {
                let agg = self.pick(&["sum", "max", "min"]);
                self.lines.push(format!("{target} = {agg}(item.{m}() for item in {})", src.code));
                if src.tainted {
                    self.ops.push(m.into());
                    self.ops.push(agg.into());
                }
                self.bind(target, src.tainted);
            }
            2 => {
                let f = "fn_l";
                self.lines.push(format!("{f} = lambda z: z.{m}()"));
                self.lines.push(format!("{target} = {f}({})", src.code));
                self.tainted.remove(f);
                if src.tainted {
                    self.ops.push(m.into());
                    self.ops.push(f.into());
                }
                self.bind(target, src.tainted);
            }
            _ => {
                let f = "helper";
                self.lines.push(format!("def {f}(z):"));
                self.lines.push(format!("    return z.{m}()"));
                self.lines.push(format!("{target} = {f}({})", src.code));
                self.tainted.remove(f);
                if src.tainted {
                    self.ops.push(m.into());
                    self.ops.push(f.into());
                }
                self.bind(target, src.tainted);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_script() {
        assert_eq!(synth_script(7, 30, false), synth_script(7, 30, false));
        assert_ne!(synth_script(7, 30, false).source, synth_script(8, 30, false).source);
    }

    #[test]
    fn salted_scripts_are_salted() {
        assert!(synth_script(3, 5, true).salted);
        assert!(!synth_script(3, 5, false).salted);
    }
}
