//! Finite N-step path spaces with labeled points and per-step metrics.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{Distance, Exponent, PowValue, Rational};

/// One label index per step, in declaration order.
pub type Path = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StepMetric {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl StepMetric {
    pub fn name(&self) -> &'static str {
        match self {
            StepMetric::Euclidean => "euclidean",
            StepMetric::Manhattan => "manhattan",
            StepMetric::Chebyshev => "chebyshev",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "euclidean" => Ok(StepMetric::Euclidean),
            "manhattan" => Ok(StepMetric::Manhattan),
            "chebyshev" => Ok(StepMetric::Chebyshev),
            other => Err(Error::InvalidSpace(format!("unknown metric {other:?}"))),
        }
    }

    pub fn distance(&self, a: &[Rational], b: &[Rational]) -> Distance {
        match self {
            StepMetric::Euclidean => Distance::from_squared(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
            StepMetric::Manhattan => Distance::from_value(&a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()),
            StepMetric::Chebyshev => {
                Distance::from_value(&a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or_else(Rational::zero))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Point {
    pub label: String,
    pub coord: Vec<Rational>,
}

impl Point {
    pub fn new(label: impl Into<String>, coord: Vec<Rational>) -> Self {
        Point { label: label.into(), coord }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub points: Vec<Point>,
    pub metric: StepMetric,
}

impl Step {
    pub fn new(points: Vec<Point>) -> Self {
        Step { points, metric: StepMetric::default() }
    }

    pub fn with_metric(mut self, metric: StepMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, |p| p.coord.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSpace {
    steps: Vec<Step>,
    index: Vec<BTreeMap<String, usize>>,
}

impl PathSpace {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidSpace("a path space needs at least one step".into()));
        }
        let mut index = Vec::with_capacity(steps.len());
        for (t, step) in steps.iter().enumerate() {
            if step.points.is_empty() {
                return Err(Error::InvalidSpace(format!("step {t} has an empty alphabet")));
            }
            let dim = step.dimension();
            let mut labels = BTreeMap::new();
            for (i, p) in step.points.iter().enumerate() {
                if p.coord.len() != dim {
                    return Err(Error::InvalidSpace(format!(
                        "point {:?} at step {t} has dimension {}, expected {dim}",
                        p.label,
                        p.coord.len()
                    )));
                }
                if labels.insert(p.label.clone(), i).is_some() {
                    return Err(Error::InvalidSpace(format!("duplicate label {:?} at step {t}", p.label)));
                }
            }
            index.push(labels);
        }
        Ok(PathSpace { steps, index })
    }

    /// Space with 1-D points whose labels are their coordinate strings.
    pub fn from_coordinates(steps: &[&[&str]]) -> Result<Self> {
        let steps = steps
            .iter()
            .map(|pts| {
                let points = pts
                    .iter()
                    .map(|c| Ok(Point::new(*c, vec![crate::rational::parse_rational(c)?])))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Step::new(points))
            })
            .collect::<Result<Vec<_>>>()?;
        PathSpace::new(steps)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn step(&self, t: usize) -> &Step {
        &self.steps[t]
    }

    pub fn alphabet_len(&self, t: usize) -> usize {
        self.steps[t].points.len()
    }

    pub fn label(&self, t: usize, i: usize) -> &str {
        &self.steps[t].points[i].label
    }

    pub fn coord(&self, t: usize, i: usize) -> &[Rational] {
        &self.steps[t].points[i].coord
    }

    pub fn index_of(&self, t: usize, label: &str) -> Option<usize> {
        self.index.get(t)?.get(label).copied()
    }

    pub fn labels(&self, path: &[usize]) -> Vec<String> {
        path.iter()
            .enumerate()
            .map(|(t, &i)| match self.steps.get(t).and_then(|s| s.points.get(i)) {
                Some(p) => p.label.clone(),
                None => format!("#{i}"),
            })
            .collect()
    }

    pub fn path_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Path> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch(format!("path has {} steps, space has {}", labels.len(), self.len())));
        }
        self.prefix_of(labels)
    }

    /// Resolves a label prefix of any length up to the number of steps.
    pub fn prefix_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Path> {
        let owned: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        labels
            .iter()
            .enumerate()
            .map(|(t, l)| {
                self.index_of(t, l.as_ref()).ok_or_else(|| Error::UnknownLabel { path: owned.clone(), step: t })
            })
            .collect()
    }

    pub fn contains(&self, path: &[usize]) -> bool {
        path.len() == self.len() && path.iter().enumerate().all(|(t, &i)| i < self.alphabet_len(t))
    }

    /// The space of the first `t` steps.
    pub fn truncate(&self, t: usize) -> Result<PathSpace> {
        if t == 0 || t > self.len() {
            return Err(Error::StepOutOfRange { step: t, steps: self.len() });
        }
        PathSpace::new(self.steps[..t].to_vec())
    }

    /// Concatenation of two spaces, `self` first.
    pub fn concat(&self, other: &PathSpace) -> Result<PathSpace> {
        PathSpace::new(self.steps.iter().chain(other.steps.iter()).cloned().collect())
    }

    /// Same points, new labels; coordinates and declaration order untouched.
    pub fn relabel(&self, rename: impl Fn(usize, &str) -> String) -> Result<PathSpace> {
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| Step {
                points: s.points.iter().map(|p| Point::new(rename(t, &p.label), p.coord.clone())).collect(),
                metric: s.metric,
            })
            .collect();
        PathSpace::new(steps)
    }

    /// All paths in lexicographic index order.
    pub fn paths(&self) -> Vec<Path> {
        let mut out = vec![Vec::new()];
        for step in &self.steps {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..step.points.len()).map(move |i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn step_distance(&self, t: usize, i: usize, j: usize) -> Distance {
        let step = &self.steps[t];
        step.metric.distance(&step.points[i].coord, &step.points[j].coord)
    }

    /// Largest pairwise distance among the given points of step `t`.
    pub fn diameter(&self, t: usize, points: &[usize]) -> Distance {
        let mut best = Distance::zero();
        for (k, &i) in points.iter().enumerate() {
            for &j in &points[k + 1..] {
                let d = self.step_distance(t, i, j);
                if d > best {
                    best = d;
                }
            }
        }
        best
    }
}

/// Product metric `d(x, y)^p = sum_t d_t(x_t, y_t)^p` on path spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductMetric {
    pub p: Exponent,
}

impl ProductMetric {
    pub fn new(p: Exponent) -> Self {
        ProductMetric { p }
    }

    /// Distance between a point of `left` at step `t` and one of `right`.
    pub fn step_pp(&self, left: &PathSpace, right: &PathSpace, t: usize, i: usize, j: usize) -> Result<PowValue> {
        let (a, b) = (left.step(t), right.step(t));
        if a.metric != b.metric {
            return Err(Error::SpaceMismatch(format!("step {t} uses different metrics")));
        }
        if a.dimension() != b.dimension() {
            return Err(Error::DimensionMismatch(format!(
                "step {t} has dimensions {} and {}",
                a.dimension(),
                b.dimension()
            )));
        }
        Ok(a.metric.distance(&a.points[i].coord, &b.points[j].coord).pow(&self.p))
    }

    /// `d(x, y)^p` between a path of `left` and a path of `right`.
    pub fn distance_pp(&self, left: &PathSpace, x: &[usize], right: &PathSpace, y: &[usize]) -> Result<PowValue> {
        if x.len() != y.len() || left.len() != right.len() || x.len() != left.len() {
            return Err(Error::DimensionMismatch(format!(
                "paths of length {} and {} in spaces of {} and {} steps",
                x.len(),
                y.len(),
                left.len(),
                right.len()
            )));
        }
        let mut total = PowValue::Exact(Rational::zero());
        for t in 0..x.len() {
            total = total.add(&self.step_pp(left, right, t, x[t], y[t])?);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    #[test]
    fn rejects_duplicate_labels_and_empty_steps() {
        let dup = PathSpace::new(vec![Step::new(vec![Point::new("a", vec![int(0)]), Point::new("a", vec![int(1)])])]);
        assert!(matches!(dup, Err(Error::InvalidSpace(_))));
        assert!(PathSpace::new(vec![]).is_err());
        assert!(PathSpace::new(vec![Step::new(vec![])]).is_err());
    }

    #[test]
    fn distance_pp_examples() {
        let s = PathSpace::from_coordinates(&[&["0", "1", "4"], &["0", "1", "3"]]).unwrap();
        let m1 = ProductMetric::new(Exponent::integer(1));
        let m2 = ProductMetric::new(Exponent::integer(2));
        let x = s.path_of(&["0", "0"]).unwrap();
        let y = s.path_of(&["1", "1"]).unwrap();
        assert_eq!(m1.distance_pp(&s, &x, &s, &x).unwrap(), PowValue::Exact(int(0)));
        assert_eq!(m1.distance_pp(&s, &x, &s, &y).unwrap(), PowValue::Exact(int(2)));
        let a = s.path_of(&["0", "3"]).unwrap();
        let b = s.path_of(&["4", "0"]).unwrap();
        assert_eq!(m2.distance_pp(&s, &a, &s, &b).unwrap(), PowValue::Exact(int(25)));
        let short = s.truncate(1).unwrap();
        assert!(matches!(m1.distance_pp(&s, &x, &short, &[0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn paths_enumerate_lexicographically() {
        let s = PathSpace::from_coordinates(&[&["0", "1"], &["5", "6", "7"]]).unwrap();
        let paths = s.paths();
        assert_eq!(paths.len(), 6);
        assert_eq!(paths[0], vec![0, 0]);
        assert_eq!(paths[5], vec![1, 2]);
        assert!(paths.windows(2).all(|w| w[0] < w[1]));
    }
}
