use std::fmt::Write as _;

use super::{BestMode, Expr, Literal, Plan, SortOrder, Step};

fn literal(out: &mut String, lit: &Literal) {
    match lit {
        Literal::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Literal::Str(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
    }
}

fn expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Var(v) => out.push_str(v),
        Expr::Lit(l) => literal(out, l),
        Expr::Field { of, field } => {
            expr(out, of);
            out.push('.');
            out.push_str(field);
        }
        Expr::Index { of, index } => {
            expr(out, of);
            let _ = write!(out, "[{index}]");
        }
    }
}

fn steps(out: &mut String, body: &[Step], depth: usize) {
    let pad = "  ".repeat(depth);
    for step in body {
        out.push_str(&pad);
        let _ = write!(out, "let {} = ", step.bind());
        match step {
            Step::Call { api, args, .. } => {
                let _ = write!(out, "call {api}(");
                for (i, (name, value)) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(name);
                    out.push('=');
                    expr(out, value);
                }
                out.push(')');
            }
            Step::ForEach { var, over, body, collect, .. } => {
                let _ = write!(out, "foreach {var} in ");
                expr(out, over);
                out.push_str(" {\n");
                steps(out, body, depth + 1);
                let _ = write!(out, "{pad}  yield ");
                expr(out, collect);
                let _ = write!(out, "\n{pad}}}");
            }
            Step::Filter { over, field, cmp, value, .. } => {
                out.push_str("filter ");
                expr(out, over);
                let _ = write!(out, " by {field} {} ", cmp.symbol());
                literal(out, value);
            }
            Step::SortBy { over, field, order, .. } => {
                out.push_str("sort ");
                expr(out, over);
                let dir = match order {
                    SortOrder::Asc => "asc",
                    SortOrder::Desc => "desc",
                };
                let _ = write!(out, " by {field} {dir}");
            }
            Step::ArgBest { over, field, mode, .. } => {
                out.push_str(match mode {
                    BestMode::Max => "argmax ",
                    BestMode::Min => "argmin ",
                });
                expr(out, over);
                let _ = write!(out, " by {field}");
            }
            Step::Take { over, k, .. } => {
                out.push_str("take ");
                expr(out, over);
                let _ = write!(out, " {k}");
            }
            Step::Select { from, field, .. } => {
                expr(out, from);
                out.push('.');
                out.push_str(field);
            }
        }
        out.push('\n');
    }
}

/// Canonical text: one step per line, two-space indentation in loop bodies,
/// call arguments sorted by name.
pub fn serialize_plan(p: &Plan) -> String {
    let mut out = String::from("plan(");
    for (i, param) in p.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{}: {}", param.name, param.kind);
    }
    out.push_str(")\n");
    steps(&mut out, &p.body, 0);
    out.push_str("return ");
    expr(&mut out, &p.result);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_plan;
    use super::*;

    #[test]
    fn canonical_form_normalizes_spacing_and_arg_order() {
        let src = "plan( a :text )\n\nlet r = call X(z=1,  b=a) # note\n  let s = r[0].f\nreturn s\n";
        let canon = serialize_plan(&parse_plan(src).unwrap());
        assert_eq!(canon, "plan(a: text)\nlet r = call X(b=a, z=1)\nlet s = r[0].f\nreturn s\n");
        assert_eq!(serialize_plan(&parse_plan(&canon).unwrap()), canon);
    }

    #[test]
    fn one_step_per_line() {
        let src = "plan(p: entity_id)\nlet c = call getCoauthors(person_id=p)\nlet o = foreach x in c {\nlet i = call getPersonBasicInfo(person_id=x.person_id)\nyield i.name }\nreturn o\n";
        let canon = serialize_plan(&parse_plan(src).unwrap());
        assert_eq!(
            canon,
            "plan(p: entity_id)\nlet c = call getCoauthors(person_id=p)\nlet o = foreach x in c {\n  let i = call getPersonBasicInfo(person_id=x.person_id)\n  yield i.name\n}\nreturn o\n"
        );
    }
}
