//! Finite joint distributions and exact information quantities over them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Probability arithmetic used by [`JointDistribution`].
pub trait Probability: Clone + Send + Sync + PartialEq + fmt::Debug + 'static {
    type Acc: Default + Send;

    fn zero() -> Self;
    fn one() -> Self;
    /// `num / den`.
    fn ratio(num: u64, den: u64) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn to_f64(&self) -> f64;
    fn accumulate(acc: &mut Self::Acc, x: &Self);
    fn total(acc: Self::Acc) -> Self;

    /// `log2(n1 * n2 / (d1 * d2))`.
    fn log2_ratio(n1: &Self, n2: &Self, d1: &Self, d2: &Self) -> f64 {
        ((n1.to_f64() * n2.to_f64()) / (d1.to_f64() * d2.to_f64())).log2()
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Probability for f64 {
    type Acc = Compensated;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn accumulate(acc: &mut Compensated, x: &Self) {
        acc.add(*x);
    }
    fn total(acc: Compensated) -> Self {
        acc.value()
    }
}

impl Probability for BigRational {
    type Acc = Option<BigRational>;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn accumulate(acc: &mut Option<BigRational>, x: &Self) {
        match acc {
            Some(a) => *a += x,
            None => *acc = Some(x.clone()),
        }
    }
    fn total(acc: Option<BigRational>) -> Self {
        acc.unwrap_or_else(Zero::zero)
    }
    fn log2_ratio(n1: &Self, n2: &Self, d1: &Self, d2: &Self) -> f64 {
        let r = (n1 * n2) / (d1 * d2);
        if One::is_one(&r) {
            0.0
        } else {
            Probability::to_f64(&r).log2()
        }
    }
}

/// Collects weighted outcomes, merging identical ones.
pub struct DistributionBuilder<P: Probability> {
    names: Vec<String>,
    interners: Vec<HashMap<Vec<u8>, u32>>,
    alphabets: Vec<Vec<Vec<u8>>>,
    index: HashMap<Vec<u32>, usize>,
    cells: Vec<(Vec<u32>, P::Acc)>,
}

impl<P: Probability> DistributionBuilder<P> {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let k = names.len();
        DistributionBuilder {
            names,
            interners: vec![HashMap::new(); k],
            alphabets: vec![Vec::new(); k],
            index: HashMap::new(),
            cells: Vec::new(),
        }
    }

    /// Adds `p` to the outcome whose variables take `values` (in name order).
    pub fn add(&mut self, values: &[Vec<u8>], p: &P) {
        assert_eq!(values.len(), self.names.len(), "one value per variable");
        let key: Vec<u32> = values
            .iter()
            .enumerate()
            .map(|(v, bytes)| {
                if let Some(&id) = self.interners[v].get(bytes) {
                    return id;
                }
                let id = self.alphabets[v].len() as u32;
                self.interners[v].insert(bytes.clone(), id);
                self.alphabets[v].push(bytes.clone());
                id
            })
            .collect();
        let slot = match self.index.get(&key) {
            Some(&i) => i,
            None => {
                self.index.insert(key.clone(), self.cells.len());
                self.cells.push((key, P::Acc::default()));
                self.cells.len() - 1
            }
        };
        P::accumulate(&mut self.cells[slot].1, p);
    }

    pub fn build(self) -> JointDistribution<P> {
        JointDistribution {
            names: self.names,
            alphabets: self.alphabets,
            cells: self
                .cells
                .into_iter()
                .map(|(k, acc)| (k, P::total(acc)))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
        }
    }
}

/// A probability table over named discrete variables. Values are opaque byte
/// strings; only equality matters.
#[derive(Clone, Debug)]
pub struct JointDistribution<P: Probability> {
    names: Vec<String>,
    alphabets: Vec<Vec<Vec<u8>>>,
    cells: Vec<(Vec<u32>, P)>,
}

fn entropy_of<P: Probability>(groups: &BTreeMap<Vec<u32>, P>) -> f64 {
    let mut acc = Compensated::default();
    for p in groups.values() {
        let x = p.to_f64();
        if x > 0.0 {
            acc.add(-x * x.log2());
        }
    }
    acc.value()
}

impl<P: Probability> JointDistribution<P> {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of outcomes with nonzero mass.
    pub fn support_size(&self) -> usize {
        self.cells.len()
    }

    pub fn total(&self) -> P {
        let mut acc = P::Acc::default();
        for (_, p) in &self.cells {
            P::accumulate(&mut acc, p);
        }
        P::total(acc)
    }

    fn var(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    fn vars(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.var(n)).collect()
    }

    fn group(&self, vars: &[usize]) -> BTreeMap<Vec<u32>, P> {
        let mut acc: BTreeMap<Vec<u32>, P::Acc> = BTreeMap::new();
        for (key, p) in &self.cells {
            let sub: Vec<u32> = vars.iter().map(|&v| key[v]).collect();
            P::accumulate(acc.entry(sub).or_default(), p);
        }
        acc.into_iter().map(|(k, a)| (k, P::total(a))).collect()
    }

    /// Distribution of the listed variables only.
    pub fn marginal(&self, names: &[&str]) -> Result<JointDistribution<P>> {
        let vars = self.vars(names)?;
        Ok(JointDistribution {
            names: names.iter().map(|s| s.to_string()).collect(),
            alphabets: vars.iter().map(|&v| self.alphabets[v].clone()).collect(),
            cells: self.group(&vars).into_iter().collect(),
        })
    }

    /// Probability that `name` equals `value`.
    pub fn probability_of(&self, name: &str, value: &[u8]) -> Result<P> {
        let v = self.var(name)?;
        let mut acc = P::Acc::default();
        if let Some(id) = self.alphabets[v].iter().position(|a| a == value) {
            for (key, p) in &self.cells {
                if key[v] == id as u32 {
                    P::accumulate(&mut acc, p);
                }
            }
        }
        Ok(P::total(acc))
    }

    /// Conditional distribution given `name = value`.
    pub fn condition(&self, name: &str, value: &[u8]) -> Result<JointDistribution<P>> {
        let v = self.var(name)?;
        let mass = self.probability_of(name, value)?;
        if mass.is_zero() {
            return Err(Error::config(format!(
                "cannot condition on a null event {name} = {value:?}"
            )));
        }
        let id = self.alphabets[v]
            .iter()
            .position(|a| a == value)
            .expect("positive mass") as u32;
        Ok(JointDistribution {
            names: self.names.clone(),
            alphabets: self.alphabets.clone(),
            cells: self
                .cells
                .iter()
                .filter(|(k, _)| k[v] == id)
                .map(|(k, p)| (k.clone(), p.div(&mass)))
                .collect(),
        })
    }

    /// Joint entropy of the listed variables, in bits.
    pub fn entropy(&self, names: &[&str]) -> Result<f64> {
        let vars = self.vars(names)?;
        Ok(entropy_of(&self.group(&vars)))
    }

    fn disjoint(&self, groups: &[&[&str]]) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for g in groups {
            for n in *g {
                self.var(n)?;
                if !seen.insert(*n) {
                    return Err(Error::OverlappingGroups(n.to_string()));
                }
            }
        }
        Ok(())
    }

    /// `I(A; B)` in bits, summed term by term over the table.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        self.conditional_mutual_information(a, b, &[])
    }

    /// `I(A; B | C)` in bits.
    pub fn conditional_mutual_information(&self, a: &[&str], b: &[&str], c: &[&str]) -> Result<f64> {
        self.disjoint(&[a, b, c])?;
        let (va, vb, vc) = (self.vars(a)?, self.vars(b)?, self.vars(c)?);
        let cat = |x: &[usize], y: &[usize]| [x, y].concat();
        let p_abc = self.group(&cat(&cat(&va, &vb), &vc));
        let p_ac = self.group(&cat(&va, &vc));
        let p_bc = self.group(&cat(&vb, &vc));
        let p_c = self.group(&vc);
        let (na, nb) = (va.len(), vb.len());
        let mut acc = Compensated::default();
        for (key, p) in &p_abc {
            let ka = &key[..na];
            let kb = &key[na..na + nb];
            let kc = &key[na + nb..];
            let pac = &p_ac[&[ka, kc].concat()];
            let pbc = &p_bc[&[kb, kc].concat()];
            let pc = &p_c[kc];
            acc.add(p.to_f64() * P::log2_ratio(p, pc, pac, pbc));
        }
        Ok(acc.value())
    }
}
