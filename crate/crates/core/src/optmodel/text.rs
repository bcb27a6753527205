//! Line-oriented text form of a [`Problem`], used for debugging dumps and
//! golden files.
//!
//! ```text
//! linbess-problem 1
//! vars <n>
//! v <name> <c|b> <lower> <upper>            (n lines, index order)
//! cons <m>
//! c <name> <le|eq|ge> <rhs> <k> <i>:<coef> ...   (m lines, row order)
//! lin <constant> <k> <i>:<coef> ...
//! quad <k> <i>:<j>:<coef> ...
//! end
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! `from_text(to_text(p))` reproduces every coefficient bit for bit.
//! Empty names are written as `~`.

use std::fmt::Write as _;

use super::{
    Constraint, Integrality, LinearExpr, ModelError, Objective, Problem, Sense, VarRef, Variable,
};

const MAGIC: &str = "linbess-problem 1";

impl Problem {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "vars {}", self.variables.len()).unwrap();
        for v in &self.variables {
            let kind = match v.integrality {
                Integrality::Continuous => "c",
                Integrality::Binary => "b",
            };
            writeln!(
                out,
                "v {} {kind} {:?} {:?}",
                name_out(&v.name),
                v.lower,
                v.upper
            )
            .unwrap();
        }
        writeln!(out, "cons {}", self.constraints.len()).unwrap();
        for c in &self.constraints {
            let sense = match c.sense {
                Sense::Le => "le",
                Sense::Eq => "eq",
                Sense::Ge => "ge",
            };
            write!(out, "c {} {sense} {:?} ", name_out(&c.name), c.rhs).unwrap();
            write_terms(&mut out, &c.expr);
            out.push('\n');
        }
        let obj = &self.objective;
        write!(out, "lin {:?} ", obj.linear.constant).unwrap();
        write_terms(&mut out, &obj.linear);
        out.push('\n');
        write!(out, "quad {}", obj.quadratic.len()).unwrap();
        for &(a, b, c) in &obj.quadratic {
            write!(out, " {}:{}:{c:?}", a.index, b.index).unwrap();
        }
        out.push_str("\nend\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Problem, ModelError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| {
            lines.next().ok_or(ModelError::Parse {
                line: 0,
                message: format!("unexpected end of input, expected {what}"),
            })
        };

        let (ln, magic) = next("header")?;
        if magic != MAGIC {
            return Err(perr(ln, "missing header"));
        }
        let mut p = Problem::new();

        let (ln, l) = next("vars")?;
        let n = count_after(ln, l, "vars")?;
        for _ in 0..n {
            let (ln, l) = next("variable")?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 5 || tok[0] != "v" {
                return Err(perr(ln, "malformed variable line"));
            }
            let integrality = match tok[2] {
                "c" => Integrality::Continuous,
                "b" => Integrality::Binary,
                _ => return Err(perr(ln, "unknown variable kind")),
            };
            let v = Variable {
                name: name_in(tok[1]),
                lower: num(ln, tok[3])?,
                upper: num(ln, tok[4])?,
                integrality,
            };
            p.add_variable(v)
                .map_err(|e| perr(ln, &e.to_string()))?;
        }

        let (ln, l) = next("cons")?;
        let m = count_after(ln, l, "cons")?;
        for _ in 0..m {
            let (ln, l) = next("constraint")?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() < 5 || tok[0] != "c" {
                return Err(perr(ln, "malformed constraint line"));
            }
            let sense = match tok[2] {
                "le" => Sense::Le,
                "eq" => Sense::Eq,
                "ge" => Sense::Ge,
                _ => return Err(perr(ln, "unknown sense")),
            };
            let rhs = num(ln, tok[3])?;
            let expr = read_terms(&p, ln, &tok[4..])?;
            p.add_constraint(Constraint::new(name_in(tok[1]), expr, sense, rhs))
                .map_err(|e| perr(ln, &e.to_string()))?;
        }

        let (ln, l) = next("lin")?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() < 3 || tok[0] != "lin" {
            return Err(perr(ln, "malformed objective line"));
        }
        let mut linear = read_terms(&p, ln, &tok[2..])?;
        linear.constant = num(ln, tok[1])?;

        let (ln, l) = next("quad")?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() < 2 || tok[0] != "quad" {
            return Err(perr(ln, "malformed quadratic line"));
        }
        let k: usize = tok[1].parse().map_err(|_| perr(ln, "bad term count"))?;
        if tok.len() != k + 2 {
            return Err(perr(ln, "quadratic term count mismatch"));
        }
        let mut quadratic = Vec::with_capacity(k);
        for t in &tok[2..] {
            let parts: Vec<&str> = t.split(':').collect();
            if parts.len() != 3 {
                return Err(perr(ln, "malformed quadratic term"));
            }
            let a = index(&p, ln, parts[0])?;
            let b = index(&p, ln, parts[1])?;
            quadratic.push((a, b, num(ln, parts[2])?));
        }
        p.objective = Objective { linear, quadratic };

        let (ln, l) = next("end")?;
        if l != "end" {
            return Err(perr(ln, "expected `end`"));
        }
        Ok(p)
    }
}

fn write_terms(out: &mut String, e: &LinearExpr) {
    write!(out, "{}", e.terms.len()).unwrap();
    for &(v, c) in &e.terms {
        write!(out, " {}:{c:?}", v.index).unwrap();
    }
}

fn read_terms(p: &Problem, ln: usize, tok: &[&str]) -> Result<LinearExpr, ModelError> {
    let k: usize = tok[0].parse().map_err(|_| perr(ln, "bad term count"))?;
    if tok.len() != k + 1 {
        return Err(perr(ln, "term count mismatch"));
    }
    let mut e = LinearExpr::new();
    for t in &tok[1..] {
        let (i, c) = t
            .split_once(':')
            .ok_or_else(|| perr(ln, "malformed term"))?;
        e.add_term(index(p, ln, i)?, num(ln, c)?);
    }
    Ok(e)
}

fn index(p: &Problem, ln: usize, s: &str) -> Result<VarRef, ModelError> {
    let i: usize = s.parse().map_err(|_| perr(ln, "bad variable index"))?;
    if i >= p.num_vars() {
        return Err(perr(ln, "variable index out of range"));
    }
    Ok(p.var_ref(i))
}

fn count_after(ln: usize, l: &str, key: &str) -> Result<usize, ModelError> {
    l.strip_prefix(key)
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| perr(ln, &format!("expected `{key} <count>`")))
}

fn num(ln: usize, s: &str) -> Result<f64, ModelError> {
    s.parse().map_err(|_| perr(ln, &format!("bad number `{s}`")))
}

fn perr(line: usize, message: &str) -> ModelError {
    ModelError::Parse {
        line,
        message: message.to_string(),
    }
}

fn name_out(name: &str) -> &str {
    if name.is_empty() {
        "~"
    } else {
        name
    }
}

fn name_in(tok: &str) -> String {
    if tok == "~" {
        String::new()
    } else {
        tok.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Problem {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::continuous("x", 0.0, 0.8)).unwrap();
        let y = p.add_variable(Variable::free("")).unwrap();
        let z = p.add_variable(Variable::binary("z")).unwrap();
        p.add_constraint(Constraint::le(
            "cap",
            LinearExpr::from(x) - LinearExpr::term(z, 0.8),
            0.0,
        ))
        .unwrap();
        p.add_constraint(Constraint::eq("bal", LinearExpr::from(x) + LinearExpr::from(y), 0.1))
            .unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(x) + LinearExpr::term(y, -1.0) - 0.3])
            .unwrap();
        p
    }

    #[test]
    fn text_is_stable_and_round_trips() {
        let p = sample();
        let text = p.to_text();
        assert_eq!(text, sample().to_text());
        let q = Problem::from_text(&text).unwrap();
        assert_eq!(q.to_text(), text);
        assert_eq!(q.variables(), p.variables());
        assert!(text.contains("v ~ c -inf inf"));
    }

    #[test]
    fn rejects_out_of_range_index() {
        let text = "linbess-problem 1\nvars 1\nv x c 0.0 1.0\ncons 1\nc r le 1.0 1 3:1.0\nlin 0.0 0\nquad 0\nend\n";
        assert!(matches!(
            Problem::from_text(text),
            Err(ModelError::Parse { line: 5, .. })
        ));
    }
}
