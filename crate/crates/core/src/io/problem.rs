//! Problem input:
//!
//! ```text
//! format 1
//! lambda 0.8
//! kappa 0.1
//! step 0.25
//! variant uniform
//! delta a1:b2 0.3
//! max_axis_angle 0.5
//! interest a1:b1,a2:b2
//! [A]
//! a1 0 0 0 1
//! [B]
//! b1 0 0 0 1
//! ```
//!
//! Header keys are optional except `format`; `delta` and `max_axis_angle`
//! may repeat.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use super::{content_lines, num, parse_err, write_file, IoError};
use crate::cayley::{SamplerConfig, Variant};
use crate::geometry::Vec3;
use crate::model::{ConstraintSpec, GlobalConstraint, InterestSet, Point, PointSet, Problem, Side};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub problem: Problem,
    pub sampler: SamplerConfig,
}

pub fn format_problem(pf: &ProblemFile) -> String {
    let p = &pf.problem;
    let mut s = String::new();
    writeln!(s, "format {FORMAT_VERSION}").unwrap();
    writeln!(s, "lambda {}", p.spec.lambda).unwrap();
    writeln!(s, "kappa {}", p.spec.kappa).unwrap();
    writeln!(s, "step {}", pf.sampler.step).unwrap();
    writeln!(s, "variant {}", pf.sampler.variant).unwrap();
    for (pair, d) in &p.spec.delta_overrides {
        writeln!(s, "delta {}:{} {}", p.a.points[pair.a].label, p.b.points[pair.b].label, d).unwrap();
    }
    for g in &p.global {
        let GlobalConstraint::InterAxisAngleMax(t) = g;
        writeln!(s, "max_axis_angle {t}").unwrap();
    }
    if let Some(is) = &p.interest {
        let pairs: Vec<String> = is
            .pairs
            .iter()
            .map(|q| format!("{}:{}", p.a.points[q.a].label, p.b.points[q.b].label))
            .collect();
        writeln!(s, "interest {}", pairs.join(",")).unwrap();
    }
    for set in [&p.a, &p.b] {
        writeln!(s, "[{}]", set.side).unwrap();
        for q in &set.points {
            writeln!(s, "{} {} {} {} {}", q.label, q.pos.x, q.pos.y, q.pos.z, q.radius).unwrap();
        }
    }
    s
}

fn split_pair(line: usize, s: &str) -> Result<(String, String), IoError> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| parse_err(line, format!("expected A:B pair, got `{s}`")))?;
    Ok((a.to_string(), b.to_string()))
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, IoError> {
    let mut spec = ConstraintSpec::default();
    let mut sampler = SamplerConfig::default();
    let mut global = Vec::new();
    let mut deltas: Vec<(usize, String, String, f64)> = Vec::new();
    let mut interest: Option<(usize, Vec<(String, String)>)> = None;
    let mut version = None;
    let mut block: Option<Side> = None;
    let mut pts: BTreeMap<Side, Vec<Point>> = BTreeMap::new();
    let mut last_line = 0;
    for (ln, line) in content_lines(text) {
        last_line = ln;
        match line {
            "[A]" => {
                block = Some(Side::A);
                continue;
            }
            "[B]" => {
                block = Some(Side::B);
                continue;
            }
            _ => {}
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if let Some(side) = block {
            if fields.len() != 5 {
                return Err(parse_err(ln, "expected `label x y z radius`"));
            }
            let pos = Vec3::new(num(ln, fields[1])?, num(ln, fields[2])?, num(ln, fields[3])?);
            pts.entry(side).or_default().push(Point::new(fields[0], pos, num(ln, fields[4])?));
            continue;
        }
        let arg = |k: usize| fields.get(k).copied().ok_or_else(|| parse_err(ln, "missing value"));
        let expect = |n: usize| {
            if fields.len() == n {
                Ok(())
            } else {
                Err(parse_err(ln, format!("`{}` takes {} value(s)", fields[0], n - 1)))
            }
        };
        match fields[0] {
            "format" => {
                expect(2)?;
                let v: u32 = num(ln, arg(1)?)?;
                if v != FORMAT_VERSION {
                    return Err(parse_err(ln, format!("unsupported format {v}")));
                }
                version = Some(v);
            }
            "lambda" => {
                expect(2)?;
                spec.lambda = num(ln, arg(1)?)?;
            }
            "kappa" => {
                expect(2)?;
                spec.kappa = num(ln, arg(1)?)?;
            }
            "step" => {
                expect(2)?;
                sampler.step = num(ln, arg(1)?)?;
                if !(sampler.step > 0.0) || !sampler.step.is_finite() {
                    return Err(parse_err(ln, "step must be positive"));
                }
            }
            "variant" => {
                expect(2)?;
                sampler.variant = arg(1)?.parse::<Variant>().map_err(|e| parse_err(ln, e))?;
            }
            "delta" => {
                expect(3)?;
                let (a, b) = split_pair(ln, arg(1)?)?;
                deltas.push((ln, a, b, num(ln, arg(2)?)?));
            }
            "max_axis_angle" => {
                expect(2)?;
                global.push(GlobalConstraint::InterAxisAngleMax(num(ln, arg(1)?)?));
            }
            "interest" => {
                expect(2)?;
                let pairs = arg(1)?
                    .split(',')
                    .map(|s| split_pair(ln, s))
                    .collect::<Result<Vec<_>, _>>()?;
                interest = Some((ln, pairs));
            }
            other => return Err(parse_err(ln, format!("unknown key `{other}`"))),
        }
    }
    if version.is_none() {
        return Err(parse_err(1, "missing `format` line"));
    }
    let take = |side: Side, pts: &mut BTreeMap<Side, Vec<Point>>| -> Result<PointSet, IoError> {
        let v = pts
            .remove(&side)
            .ok_or_else(|| parse_err(last_line, format!("missing [{side}] block")))?;
        Ok(PointSet::new(side, v)?)
    };
    let a = take(Side::A, &mut pts)?;
    let b = take(Side::B, &mut pts)?;
    let pair = |ln: usize, x: &str, y: &str| -> Result<crate::model::PairId, IoError> {
        let (Some(i), Some(j)) = (a.index_of(x), b.index_of(y)) else {
            return Err(parse_err(ln, format!("unknown pair {x}:{y}")));
        };
        Ok(crate::model::PairId::new(i, j))
    };
    for (ln, x, y, d) in &deltas {
        spec.delta_overrides.insert(pair(*ln, x, y)?, *d);
    }
    let interest = match interest {
        Some((ln, pairs)) => Some(InterestSet::new(
            pairs.iter().map(|(x, y)| pair(ln, x, y)).collect::<Result<_, _>>()?,
        )),
        None => None,
    };
    let problem = Problem::new(a, b, spec, global, interest)?;
    Ok(ProblemFile { problem, sampler })
}

pub fn load_problem(path: &Path) -> Result<ProblemFile, IoError> {
    parse_problem(&std::fs::read_to_string(path)?)
}

pub fn save_problem(pf: &ProblemFile, path: &Path) -> Result<(), IoError> {
    write_file(path, &format_problem(pf))
}
