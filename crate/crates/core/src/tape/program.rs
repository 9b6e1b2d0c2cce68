//! Textual forward programs.
//!
//! One statement per line, `#` starts a comment:
//!
//! ```text
//! param sigma          # declares the next parameter slot
//! input w              # declares the next random-input slot
//! k = const 100
//! x = mul sigma w
//! e = exp x
//! y = max0 e
//! output y
//! ```
//!
//! Supported primitives: `const add sub mul div neg exp log sqrt powc max0`.
//! `powc x p` takes a numeric exponent.

use std::collections::HashMap;

use super::{Op, Tape, TapeBuilder, Var};
use crate::error::{Error, Result};

/// Records a textual program into a [`Tape`].
pub fn record(source: &str) -> Result<Tape> {
    let mut b = TapeBuilder::new();
    let mut names: HashMap<&str, Var> = HashMap::new();

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::Program {
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let lookup = |name: &str| {
            names
                .get(name)
                .copied()
                .ok_or_else(|| err(format!("unknown name `{name}`")))
        };

        match words.as_slice() {
            ["param", name] => {
                let v = b.param();
                bind(&mut names, name, v).map_err(err)?;
            }
            ["input", name] => {
                let v = b.input();
                bind(&mut names, name, v).map_err(err)?;
            }
            ["output", name] => {
                let v = lookup(name)?;
                b.output(v);
            }
            [target, "=", prim, args @ ..] => {
                let arity = |n: usize| {
                    if args.len() == n {
                        Ok(())
                    } else {
                        Err(err(format!("`{prim}` takes {n} argument(s), got {}", args.len())))
                    }
                };
                let number = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| err(format!("`{s}` is not a number")))
                };
                let op = match *prim {
                    "const" => {
                        arity(1)?;
                        Op::Const(number(args[0])?)
                    }
                    "add" | "sub" | "mul" | "div" => {
                        arity(2)?;
                        let (x, y) = (lookup(args[0])?, lookup(args[1])?);
                        match *prim {
                            "add" => Op::Add(x, y),
                            "sub" => Op::Sub(x, y),
                            "mul" => Op::Mul(x, y),
                            _ => Op::Div(x, y),
                        }
                    }
                    "neg" | "exp" | "log" | "sqrt" | "max0" => {
                        arity(1)?;
                        let x = lookup(args[0])?;
                        match *prim {
                            "neg" => Op::Neg(x),
                            "exp" => Op::Exp(x),
                            "log" => Op::Log(x),
                            "sqrt" => Op::Sqrt(x),
                            _ => Op::MaxZero(x),
                        }
                    }
                    "powc" => {
                        arity(2)?;
                        Op::PowConst(lookup(args[0])?, number(args[1])?)
                    }
                    other => return Err(Error::UnsupportedPrimitive(other.to_string())),
                };
                let v = b.push(op)?;
                bind(&mut names, target, v).map_err(err)?;
            }
            _ => return Err(err(format!("cannot parse `{line}`"))),
        }
    }
    b.build()
}

fn bind<'a>(names: &mut HashMap<&'a str, Var>, name: &'a str, v: Var) -> Result<(), String> {
    if names.insert(name, v).is_some() {
        return Err(format!("`{name}` is already defined"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_product() {
        let t = record("param a\ninput w\ny = mul a w\noutput y\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.forward(&[2.0], &[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn records_call_payoff_with_kink() {
        let src = "
            param sigma
            input w
            s0 = const 100
            k = const 90
            t = const 1
            v2 = mul sigma sigma
            h = const -0.5
            drift = mul v2 h
            rt = sqrt t
            vol = mul sigma rt
            diff = mul vol w
            x = add drift diff
            g = exp x
            s = mul s0 g
            itm = sub s k
            y = max0 itm
            output y
        ";
        let t = record(src).unwrap();
        assert_eq!(t.ops().iter().filter(|op| matches!(op, Op::MaxZero(_))).count(), 1);
        assert_eq!(t.len(), 16);
        let y = t.forward(&[0.2], &[0.0]).unwrap()[0];
        assert_eq!(y, 100.0 * (-0.02f64).exp() - 90.0);
    }

    #[test]
    fn two_outputs() {
        let t = record("param a\ny = exp a\nz = neg a\noutput y\noutput z").unwrap();
        assert_eq!(t.output_slots().len(), 2);
    }

    #[test]
    fn unsupported_primitive_is_named() {
        let err = record("param a\ny = sin a\noutput y").unwrap_err();
        match err {
            Error::UnsupportedPrimitive(name) => assert_eq!(name, "sin"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_programs() {
        assert!(matches!(record("param a\ny = add a b\noutput y"), Err(Error::Program { line: 2, .. })));
        assert!(matches!(record("param a\nparam a"), Err(Error::Program { line: 2, .. })));
        assert!(matches!(record("param a\ny = exp a a\noutput y"), Err(Error::Program { .. })));
        assert!(matches!(record("what"), Err(Error::Program { line: 1, .. })));
    }
}
