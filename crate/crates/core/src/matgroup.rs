//! Finitely generated matrix groups: words, presentations, orbit enumeration,
//! conjugacy classes and linear representations.
//!
//! Letters are ordered `g0, g0^-1, g1, g1^-1, ...`. Balls and spheres are
//! always returned in canonical order: by length, then lexicographically.
//! Free presentations are walked depth first in independent prefix shards,
//! which keeps memory proportional to the word length and the output
//! independent of the number of worker threads.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::cartan::{jordan_with_inverse, log_spectrum_from_wedges, kappa_with_inverse, log_spectral_radius, normalize_unimodular, singular_values, unimodular_inverse, Matrix, WeylVector};
use crate::error::{Error, Result};

/// Default cap on the number of enumerated elements.
pub const DEFAULT_ELEMENT_CAP: usize = 5_000_000;

/// Rounding step for hashing matrices of non-free presentations.
const DEDUP_GRID: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(u16);

impl Letter {
    pub fn new(generator: usize, inverse: bool) -> Self {
        Letter((2 * generator + inverse as usize) as u16)
    }

    pub fn generator(self) -> usize {
        (self.0 / 2) as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 % 2 == 1
    }

    pub fn inverse(self) -> Letter {
        Letter(self.0 ^ 1)
    }
}

/// A word in the generators and their inverses.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn from_letters(letters: Vec<Letter>) -> Self {
        Word(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|w| w[1] != w[0].inverse())
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        self.is_reduced() && (self.0.len() < 2 || self.0[0] != self.0[self.0.len() - 1].inverse())
    }

    /// Free reduction.
    pub fn reduced(&self) -> Word {
        let mut out: Vec<Letter> = Vec::with_capacity(self.0.len());
        for &l in &self.0 {
            if out.last() == Some(&l.inverse()) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    /// The cyclically reduced word `c` with `reduced() = u c u^-1`.
    pub fn cyclic_core(&self) -> Word {
        let w = self.reduced().0;
        let (mut lo, mut hi) = (0, w.len());
        while hi - lo >= 2 && w[lo] == w[hi - 1].inverse() {
            lo += 1;
            hi -= 1;
        }
        Word(w[lo..hi].to_vec())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters).reduced()
    }

    /// True when this word is the lexicographically least of its rotations.
    pub fn is_least_rotation(&self) -> bool {
        let n = self.0.len();
        (1..n).all(|r| {
            let rotated = self.0[r..].iter().chain(&self.0[..r]);
            self.0.iter().cmp(rotated) != std::cmp::Ordering::Greater
        })
    }

    /// True when the word is a proper power of a shorter word.
    pub fn is_proper_power(&self) -> bool {
        let n = self.0.len();
        (1..n).any(|p| n.is_multiple_of(p) && (p..n).all(|i| self.0[i] == self.0[i - p]))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

/// Generators of a subgroup of SL(d, R) with labels.
#[derive(Clone, Debug)]
pub struct Presentation {
    dim: usize,
    generators: Vec<Matrix>,
    inverses: Vec<Matrix>,
    /// `wedges[k - 2][letter]`: the letter in the `k`-th exterior power, for
    /// `2 <= k <= dim / 2`.
    wedges: Vec<Vec<Matrix>>,
    labels: Vec<String>,
    assume_free: bool,
}

fn default_label(i: usize) -> String {
    const NAMES: &[u8] = b"abcdefghjkmnpqrstuvwxyz";
    if i < NAMES.len() {
        (NAMES[i] as char).to_string()
    } else {
        format!("g{i}")
    }
}

impl Presentation {
    /// Normalizes each generator to determinant one. Labels default to
    /// `a, b, c, ...` when `labels` is empty.
    pub fn new(generators: Vec<Matrix>, labels: Vec<String>, assume_free: bool) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidInput("presentation has no generators".into()));
        }
        let dim = generators[0].nrows();
        let labels = if labels.is_empty() {
            (0..generators.len()).map(default_label).collect()
        } else {
            labels
        };
        if labels.len() != generators.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} generators",
                labels.len(),
                generators.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            let valid = !l.is_empty() && l.chars().all(|c| c.is_alphanumeric() || c == '_');
            if !valid || labels[..i].contains(l) {
                return Err(Error::InvalidInput(format!("label {l:?} is empty, malformed or repeated")));
            }
        }
        let mut normalized = Vec::with_capacity(generators.len());
        let mut inverses = Vec::with_capacity(generators.len());
        for g in &generators {
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::InvalidInput("generators have mismatched sizes".into()));
            }
            let g = normalize_unimodular(g)?;
            inverses.push(unimodular_inverse(&g)?);
            normalized.push(g);
        }
        Presentation::assemble(dim, normalized, inverses, labels, assume_free)
    }

    fn assemble(dim: usize, generators: Vec<Matrix>, inverses: Vec<Matrix>, labels: Vec<String>, assume_free: bool) -> Result<Self> {
        let mut p = Presentation { dim, generators, inverses, wedges: Vec::new(), labels, assume_free };
        p.wedges = (2..=dim / 2)
            .map(|k| p.letters().into_iter().map(|l| exterior_power_rep(p.letter_matrix(l), k)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn generators(&self) -> &[Matrix] {
        &self.generators
    }

    pub fn is_assumed_free(&self) -> bool {
        self.assume_free
    }

    pub fn letters(&self) -> Vec<Letter> {
        (0..2 * self.rank()).map(|c| Letter(c as u16)).collect()
    }

    pub fn letter_matrix(&self, l: Letter) -> &Matrix {
        if l.is_inverse() {
            &self.inverses[l.generator()]
        } else {
            &self.generators[l.generator()]
        }
    }

    fn letter_inverse_matrix(&self, l: Letter) -> &Matrix {
        self.letter_matrix(l.inverse())
    }

    /// The word evaluated in the exterior powers `1..=dim/2` of the standard
    /// representation, multiplying the letters inside each power. Minors of
    /// the plain product lose about `exp(gap * length)` in relative accuracy;
    /// these products do not.
    pub fn wedge_element(&self, w: &Word) -> WedgeElement {
        let products = |word: &Word| {
            let mut out = vec![GroupElement::from_word(self, word).matrix];
            for wedge in &self.wedges {
                let n = wedge[0].nrows();
                out.push(word.letters().iter().fold(Matrix::identity(n, n), |acc, l| acc * &wedge[l.0 as usize]));
            }
            out
        };
        WedgeElement { dim: self.dim, forward: products(w), backward: products(&w.inverse()) }
    }

    /// Cartan projection of a word, accurate in the middle roots for long
    /// words where the product matrix alone is not.
    pub fn kappa_of(&self, w: &Word) -> Result<WeylVector> {
        self.wedge_element(w).kappa()
    }

    /// Jordan projection of a word, evaluated on its cyclic core. The product
    /// matrix of a long conjugate `u c u^-1` loses the spectrum entirely.
    pub fn jordan_of(&self, w: &Word) -> Result<WeylVector> {
        self.wedge_element(&w.cyclic_core()).jordan()
    }

    /// Parses whitespace-separated tokens `label` or `label^k` (k a nonzero integer).
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for token in text.split_whitespace() {
            let (name, power) = match token.split_once('^') {
                Some((n, p)) => {
                    let p: i64 = p.parse().map_err(|_| Error::BadIndex(format!("bad exponent in {token:?}")))?;
                    (n, p)
                }
                None => (token, 1),
            };
            let generator = self
                .labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::BadIndex(format!("unknown generator {name:?}")))?;
            if power == 0 {
                return Err(Error::BadIndex(format!("zero exponent in {token:?}")));
            }
            let letter = Letter::new(generator, power < 0);
            letters.extend(std::iter::repeat_n(letter, power.unsigned_abs() as usize));
        }
        Ok(Word(letters).reduced())
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "e".to_string();
        }
        w.letters()
            .iter()
            .map(|l| {
                let name = &self.labels[l.generator()];
                if l.is_inverse() {
                    format!("{name}^-1")
                } else {
                    name.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Image of the presentation under a homomorphism given on matrices.
    pub fn map_generators(&self, f: impl Fn(&Matrix) -> Matrix) -> Result<Presentation> {
        let generators: Vec<Matrix> = self.generators.iter().map(&f).collect();
        let inverses: Vec<Matrix> = self.inverses.iter().map(&f).collect();
        let dim = generators[0].nrows();
        Presentation::assemble(dim, generators, inverses, self.labels.clone(), self.assume_free)
    }

    /// Presentation generated by the given words, labelled `h0, h1, ...`.
    pub fn subgroup(&self, words: &[Word], assume_free: bool) -> Result<Presentation> {
        if words.is_empty() {
            return Err(Error::InvalidInput("subgroup needs at least one word".into()));
        }
        let elements: Vec<GroupElement> = words.iter().map(|w| GroupElement::from_word(self, w)).collect();
        Presentation::assemble(
            self.dim,
            elements.iter().map(|e| e.matrix.clone()).collect(),
            elements.iter().map(|e| e.inverse.clone()).collect(),
            (0..words.len()).map(|i| format!("h{i}")).collect(),
            assume_free,
        )
    }

    /// Number of reduced words of length at most `n` in a free group of this rank.
    pub fn free_ball_size(&self, n: usize) -> u128 {
        let r = self.rank() as u128;
        let mut total: u128 = 1;
        let mut sphere: u128 = 2 * r;
        for _ in 0..n {
            total = total.saturating_add(sphere);
            sphere = sphere.saturating_mul(2 * r - 1);
        }
        total
    }
}

/// A group element with its word and both the matrix and its inverse.
#[derive(Clone, Debug)]
pub struct GroupElement {
    pub word: Word,
    pub matrix: Matrix,
    pub inverse: Matrix,
}

impl GroupElement {
    pub fn identity(d: usize) -> Self {
        GroupElement { word: Word::empty(), matrix: Matrix::identity(d, d), inverse: Matrix::identity(d, d) }
    }

    pub fn from_word(p: &Presentation, w: &Word) -> Self {
        let mut g = GroupElement::identity(p.dim());
        for &l in w.letters() {
            g.push(p, l);
        }
        g.word = w.clone();
        g
    }

    fn push(&mut self, p: &Presentation, l: Letter) {
        self.matrix = &self.matrix * p.letter_matrix(l);
        self.inverse = p.letter_inverse_matrix(l) * &self.inverse;
        self.word.0.push(l);
    }

    pub fn inverted(&self) -> GroupElement {
        GroupElement { word: self.word.inverse(), matrix: self.inverse.clone(), inverse: self.matrix.clone() }
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            word: self.word.concat(&other.word),
            matrix: &self.matrix * &other.matrix,
            inverse: &other.inverse * &self.inverse,
        }
    }

    pub fn kappa(&self) -> Result<WeylVector> {
        kappa_with_inverse(&self.matrix, &self.inverse)
    }

    pub fn jordan(&self) -> Result<WeylVector> {
        jordan_with_inverse(&self.matrix, &self.inverse)
    }
}

/// A group element given by its exterior powers `wedge^k g` and
/// `wedge^k g^-1` for `k = 1..=d/2`. Everything about `g` that depends on
/// `k`-volumes is read from these rather than from minors of `g`.
#[derive(Clone, Debug)]
pub struct WedgeElement {
    dim: usize,
    forward: Vec<Matrix>,
    backward: Vec<Matrix>,
}

impl WedgeElement {
    /// From a matrix and its inverse, computing the powers as minors.
    pub fn from_matrices(a: &Matrix, a_inv: &Matrix) -> Result<Self> {
        let dim = a.nrows();
        let powers = |m: &Matrix| (1..=dim / 2).map(|k| if k == 1 { Ok(m.clone()) } else { exterior_power_rep(m, k) }).collect::<Result<Vec<_>>>();
        Ok(WedgeElement { dim, forward: powers(a)?, backward: powers(a_inv)? })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Matrix {
        &self.forward[0]
    }

    pub fn inverse(&self) -> &Matrix {
        &self.backward[0]
    }

    /// `wedge^k g` for `1 <= k <= d/2`.
    pub fn power(&self, k: usize) -> &Matrix {
        &self.forward[k - 1]
    }

    /// `wedge^k g^-1` for `1 <= k <= d/2`.
    pub fn inverse_power(&self, k: usize) -> &Matrix {
        &self.backward[k - 1]
    }

    pub fn kappa(&self) -> Result<WeylVector> {
        let norms = |ms: &[Matrix]| -> Result<Vec<f64>> { ms.iter().map(|m| Ok(singular_values(m)?[0].ln())).collect() };
        log_spectrum_from_wedges(self.dim, &norms(&self.forward)?, &norms(&self.backward)?)
    }

    /// Meaningful for cyclically reduced words; see [`Presentation::jordan_of`].
    pub fn jordan(&self) -> Result<WeylVector> {
        let radii = |ms: &[Matrix]| -> Result<Vec<f64>> { ms.iter().map(log_spectral_radius).collect() };
        log_spectrum_from_wedges(self.dim, &radii(&self.forward)?, &radii(&self.backward)?)
    }
}

fn check_budget(p: &Presentation, n: usize, cap: usize) -> Result<()> {
    if p.is_assumed_free() && p.free_ball_size(n) > cap as u128 {
        return Err(Error::BudgetExceeded { cap });
    }
    Ok(())
}

/// Applies `f` to every element of the ball of radius `n` whose length lies in
/// `min_len..=n`, returning one bucket per length in canonical order.
pub fn map_ball<T, F>(p: &Presentation, n: usize, min_len: usize, cap: usize, f: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&GroupElement) -> T + Sync,
{
    check_budget(p, n, cap)?;
    if !p.is_assumed_free() {
        let spheres = bfs_spheres(p, n, cap)?;
        return Ok(spheres
            .into_iter()
            .skip(min_len)
            .map(|s| s.par_iter().map(&f).collect())
            .collect());
    }
    let min_len = min_len.min(n + 1);
    if n == 0 {
        let identity = (min_len == 0).then(|| f(&GroupElement::identity(p.dim())));
        return Ok(identity.map(|x| vec![vec![x]]).unwrap_or_default());
    }
    let mut buckets: Vec<Vec<T>> = (min_len..=n).map(|_| Vec::new()).collect();
    if min_len == 0 {
        buckets[0].push(f(&GroupElement::identity(p.dim())));
    }
    let shard_depth = n.min(2);
    let mut prefixes = vec![GroupElement::identity(p.dim())];
    for _ in 0..shard_depth {
        prefixes = prefixes.iter().flat_map(|g| children(p, g)).collect();
    }
    // Shorter words than the shard depth are not covered by the shards.
    if shard_depth == 2 && min_len <= 1 {
        for g in children(p, &GroupElement::identity(p.dim())) {
            buckets[1 - min_len].push(f(&g));
        }
    }
    let shards: Vec<Vec<Vec<T>>> = prefixes
        .par_iter()
        .map(|prefix| {
            let mut local: Vec<Vec<T>> = (min_len..=n).map(|_| Vec::new()).collect();
            depth_first(p, prefix, n, min_len, &f, &mut local);
            local
        })
        .collect();
    for shard in shards {
        for (bucket, mut part) in buckets.iter_mut().zip(shard) {
            bucket.append(&mut part);
        }
    }
    Ok(buckets)
}

fn children<'a>(p: &'a Presentation, g: &'a GroupElement) -> impl Iterator<Item = GroupElement> + 'a {
    let last = g.word.letters().last().copied();
    p.letters().into_iter().filter(move |&l| Some(l.inverse()) != last).map(move |l| {
        let mut child = g.clone();
        child.push(p, l);
        child
    })
}

fn depth_first<T, F>(p: &Presentation, g: &GroupElement, n: usize, min_len: usize, f: &F, out: &mut [Vec<T>])
where
    F: Fn(&GroupElement) -> T,
{
    let len = g.word.len();
    if len >= min_len {
        out[len - min_len].push(f(g));
    }
    if len < n {
        for child in children(p, g) {
            depth_first(p, &child, n, min_len, f, out);
        }
    }
}

fn matrix_key(m: &Matrix) -> Vec<i64> {
    m.iter().map(|x| (x / DEDUP_GRID).round() as i64).collect()
}

/// Breadth-first enumeration with deduplication of equal matrices.
fn bfs_spheres(p: &Presentation, n: usize, cap: usize) -> Result<Vec<Vec<GroupElement>>> {
    let identity = GroupElement::identity(p.dim());
    let mut seen: HashMap<Vec<i64>, Vec<Matrix>> = HashMap::new();
    seen.entry(matrix_key(&identity.matrix)).or_default().push(identity.matrix.clone());
    let mut spheres = vec![vec![identity]];
    let mut count = 1usize;
    for _ in 0..n {
        let mut next = Vec::new();
        for g in spheres.last().expect("at least the identity sphere") {
            for child in children(p, g) {
                let scale = child.matrix.amax().max(1.0);
                let entry = seen.entry(matrix_key(&child.matrix)).or_default();
                if entry.iter().any(|m| (m - &child.matrix).amax() <= 1e-6 * scale) {
                    continue;
                }
                entry.push(child.matrix.clone());
                count += 1;
                if count > cap {
                    return Err(Error::BudgetExceeded { cap });
                }
                next.push(child);
            }
        }
        if next.is_empty() {
            break;
        }
        spheres.push(next);
    }
    while spheres.len() < n + 1 {
        spheres.push(Vec::new());
    }
    Ok(spheres)
}

/// All elements of word length at most `n`, in canonical order.
pub fn word_ball(p: &Presentation, n: usize, cap: usize) -> Result<Vec<GroupElement>> {
    Ok(map_ball(p, n, 0, cap, |g| g.clone())?.into_iter().flatten().collect())
}

/// Elements of word length exactly `n`, in canonical order.
pub fn sphere(p: &Presentation, n: usize, cap: usize) -> Result<Vec<GroupElement>> {
    Ok(map_ball(p, n, n, cap, |g| g.clone())?.into_iter().flatten().collect())
}

/// A conjugacy class represented by its least cyclic rotation.
#[derive(Clone, Debug)]
pub struct ConjugacyClass {
    pub word: Word,
    pub jordan: WeylVector,
    pub primitive: bool,
}

#[derive(Clone, Debug)]
pub struct ClassEnumeration {
    pub classes: Vec<ConjugacyClass>,
    /// Pairs of distinct classes with numerically equal Jordan projections.
    pub collisions: Vec<(usize, usize)>,
}

/// Conjugacy classes of nontrivial elements of cyclic length at most `n` in a
/// free group, one per cyclic word. `g` and `g^-1` give distinct classes.
pub fn conjugacy_classes(p: &Presentation, n: usize, primitive_only: bool, cap: usize) -> Result<ClassEnumeration> {
    if !p.is_assumed_free() {
        return Err(Error::NotFree);
    }
    let buckets = map_ball(p, n, 1, cap, |g| {
        let w = &g.word;
        if !w.is_cyclically_reduced() || !w.is_least_rotation() {
            return None;
        }
        let primitive = !w.is_proper_power();
        if primitive_only && !primitive {
            return None;
        }
        Some(p.jordan_of(w).map(|jordan| ConjugacyClass { word: w.clone(), jordan, primitive }))
    })?;
    let classes = buckets.into_iter().flatten().flatten().collect::<Result<Vec<_>>>()?;
    let collisions = jordan_collisions(&classes, 1e-9);
    Ok(ClassEnumeration { classes, collisions })
}

fn jordan_collisions(classes: &[ConjugacyClass], tol: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..classes.len()).collect();
    let lead = |i: usize| classes[i].jordan.entries()[0];
    order.sort_by(|&a, &b| lead(a).total_cmp(&lead(b)).then(a.cmp(&b)));
    let mut out = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if lead(j) - lead(i) > tol {
                break;
            }
            if classes[i].jordan.max_abs_diff(&classes[j].jordan) <= tol {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out.sort_unstable();
    out
}

fn k_subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i + 1, d, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, k, &mut Vec::new(), &mut out);
    out
}

/// Plücker coordinates of the span of the columns of a `d x k` matrix: the
/// `k x k` minors in the basis of [`exterior_power_rep`].
pub fn plucker(columns: &Matrix) -> nalgebra::DVector<f64> {
    let (d, k) = columns.shape();
    let subsets = k_subsets(d, k);
    nalgebra::DVector::from_iterator(subsets.len(), subsets.iter().map(|rows| columns.select_rows(rows).determinant()))
}

/// Orthonormal basis of the `k`-plane with Plücker vector `xi` in dimension
/// `d`: the range of the contractions of `xi` by `(k-1)`-covectors.
pub fn plucker_span(xi: &nalgebra::DVector<f64>, d: usize, k: usize) -> Result<Matrix> {
    let index: HashMap<Vec<usize>, usize> = k_subsets(d, k).into_iter().enumerate().map(|(i, s)| (s, i)).collect();
    if xi.len() != index.len() {
        return Err(Error::InvalidInput(format!("Plücker vector of length {} for a {k}-plane in dimension {d}", xi.len())));
    }
    let faces = k_subsets(d, k - 1);
    let mut contractions = Matrix::zeros(d, faces.len());
    for (j, face) in faces.iter().enumerate() {
        for i in (0..d).filter(|i| !face.contains(i)) {
            let before = face.iter().filter(|&&f| f < i).count();
            let mut subset = face.clone();
            subset.insert(before, i);
            let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
            contractions[(i, j)] = sign * xi[index[&subset]];
        }
    }
    let svd = contractions.svd(true, false);
    let u = svd.u.ok_or(Error::DecompositionFailure("singular value decomposition"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if order.len() < k {
        return Err(Error::SingularSystem("Plücker vector has too few contractions".into()));
    }
    Ok(Matrix::from_fn(d, k, |r, c| u[(r, order[c])]))
}

/// k-th exterior power on the basis `e_I`, `I` running over increasing
/// k-subsets in lexicographic order; entries are k x k minors.
pub fn exterior_power_rep(a: &Matrix, k: usize) -> Result<Matrix> {
    let d = a.nrows();
    if k == 0 || k >= d {
        return Err(Error::BadIndex(format!("exterior power {k} in dimension {d}")));
    }
    let subsets = k_subsets(d, k);
    let n = subsets.len();
    let mut out = Matrix::zeros(n, n);
    for (i, rows) in subsets.iter().enumerate() {
        for (j, cols) in subsets.iter().enumerate() {
            out[(i, j)] = a.select_rows(rows).select_columns(cols).determinant();
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Irreducible representation of SL(2, R) on homogeneous polynomials of degree
/// `target_dim - 1`, written in the orthonormal basis
/// `sqrt(C(n, i)) x^(n-i) y^i`, so that SO(2) lands in SO(target_dim).
pub fn symmetric_power_rep(a: &Matrix, target_dim: usize) -> Result<Matrix> {
    if a.nrows() != 2 || a.ncols() != 2 {
        return Err(Error::InvalidInput("symmetric powers need a 2x2 matrix".into()));
    }
    if target_dim < 2 {
        return Err(Error::BadIndex(format!("target dimension {target_dim}")));
    }
    let n = target_dim - 1;
    // Images of the basis vectors as polynomials in the second basis vector.
    let img_x = [a[(0, 0)], a[(1, 0)]];
    let img_y = [a[(0, 1)], a[(1, 1)]];
    let mut out = Matrix::zeros(target_dim, target_dim);
    for i in 0..=n {
        let mut poly = vec![1.0];
        for _ in 0..n - i {
            poly = poly_mul(&poly, &img_x);
        }
        for _ in 0..i {
            poly = poly_mul(&poly, &img_y);
        }
        for (j, c) in poly.iter().enumerate() {
            out[(j, i)] = c * (binomial(n, i) / binomial(n, j)).sqrt();
        }
    }
    Ok(out)
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|l| format!("g{}{}", l.generator(), if l.is_inverse() { "^-1" } else { "" }))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::kappa;
    use proptest::prelude::*;

    fn m2(rows: [f64; 4]) -> Matrix {
        Matrix::from_row_slice(2, 2, &rows)
    }

    fn schottky() -> Presentation {
        let a = m2([2.0, 1.0, 1.0, 1.0]);
        let b = m2([2.0, -1.0, -1.0, 1.0]);
        Presentation::new(vec![a, b], vec![], true).unwrap()
    }

    fn rotation(t: f64) -> Matrix {
        m2([t.cos(), -t.sin(), t.sin(), t.cos()])
    }

    #[test]
    fn free_ball_sizes() {
        let p = schottky();
        assert_eq!(word_ball(&p, 0, DEFAULT_ELEMENT_CAP).unwrap().len(), 1);
        assert_eq!(word_ball(&p, 3, DEFAULT_ELEMENT_CAP).unwrap().len(), 1 + 4 + 12 + 36);
        assert_eq!(p.free_ball_size(10), 118_097);
        assert_eq!(sphere(&p, 4, DEFAULT_ELEMENT_CAP).unwrap().len(), 108);
    }

    #[test]
    fn ball_is_in_canonical_order_and_reduced() {
        let p = schottky();
        let ball = word_ball(&p, 4, DEFAULT_ELEMENT_CAP).unwrap();
        assert!(ball.windows(2).all(|w| w[0].word < w[1].word));
        assert!(ball.iter().all(|g| g.word.is_reduced()));
        let ab = p.parse_word("a b").unwrap();
        let g = ball.iter().find(|g| g.word == ab).unwrap();
        assert!((&g.matrix - &(&p.generators()[0] * &p.generators()[1])).amax() < 1e-15);
    }

    #[test]
    fn cyclic_core_strips_conjugators() {
        let p = schottky();
        let w = p.parse_word("b a^-1 a b a b^-1 b^-1").unwrap();
        assert_eq!(p.format_word(&w.cyclic_core()), "a");
        let a = p.parse_word("a").unwrap();
        assert_eq!(a.cyclic_core(), a);
        assert!(p.parse_word("b b^-1").unwrap().cyclic_core().is_empty());
    }

    #[test]
    fn kappa_of_long_power_keeps_middle_roots() {
        // a = Q diag(e^3, e^1, e^-1, e^-3) Q^T, so kappa(a^30) = 30 * (3, 1, -1, -3).
        let q = Matrix::from_row_slice(4, 4, &[0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5, 0.5]);
        let logs = [3.0, 1.0, -1.0, -3.0];
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_iterator(4, logs.iter().map(|x: &f64| x.exp())));
        let p = Presentation::new(vec![&q * d * q.transpose()], vec![], true).unwrap();
        let k = p.kappa_of(&p.parse_word("a^30").unwrap()).unwrap();
        for (got, want) in k.entries().iter().zip(logs) {
            assert!((got - 30.0 * want).abs() < 1e-11, "{k:?}");
        }
    }

    #[test]
    fn jordan_of_long_conjugate() {
        // The explicit product of b^20 a b^-20 is too ill-conditioned for its spectrum.
        let p = schottky();
        let w = p.parse_word("b^20 a b^-20").unwrap();
        let expected = GroupElement::from_word(&p, &p.parse_word("a").unwrap()).jordan().unwrap();
        assert!(p.jordan_of(&w).unwrap().max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn budget_is_enforced() {
        let p = schottky();
        assert!(matches!(word_ball(&p, 12, 1000), Err(Error::BudgetExceeded { cap: 1000 })));
    }

    #[test]
    fn finite_group_terminates() {
        let p = Presentation::new(vec![rotation(2.0 * std::f64::consts::PI / 3.0)], vec![], false).unwrap();
        assert_eq!(word_ball(&p, 10, DEFAULT_ELEMENT_CAP).unwrap().len(), 3);
    }

    #[test]
    fn classes_of_rank_two() {
        let p = schottky();
        let e = conjugacy_classes(&p, 2, false, DEFAULT_ELEMENT_CAP).unwrap();
        assert_eq!(e.classes.len(), 12);
        assert_eq!(e.classes.iter().filter(|c| c.word.len() == 1).count(), 4);
        assert_eq!(e.classes.iter().filter(|c| !c.primitive).count(), 4);
        let prim = conjugacy_classes(&p, 2, true, DEFAULT_ELEMENT_CAP).unwrap();
        assert_eq!(prim.classes.len(), 8);
        // g and g^-1 have the same spectrum in SL(2)
        assert!(e.collisions.contains(&(0, 1)));
    }

    #[test]
    fn classes_need_free_assertion() {
        let p = Presentation::new(vec![rotation(1.0)], vec![], false).unwrap();
        assert!(matches!(conjugacy_classes(&p, 3, false, 100), Err(Error::NotFree)));
    }

    #[test]
    fn cyclically_reduced_counts_match_formula() {
        // (2r-1)^L + 1 + (r-1)(1 + (-1)^L) cyclically reduced words of length L
        let p = schottky();
        for len in 1..=6usize {
            let s = sphere(&p, len, DEFAULT_ELEMENT_CAP).unwrap();
            let count = s.iter().filter(|g| g.word.is_cyclically_reduced()).count();
            let sign = if len % 2 == 0 { 2 } else { 0 };
            assert_eq!(count, 3usize.pow(len as u32) + 1 + sign);
        }
    }

    #[test]
    fn parse_and_format_words() {
        let p = schottky();
        let w = p.parse_word("b a^2 b^-1").unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(p.format_word(&w), "b a a b^-1");
        assert_eq!(p.parse_word("a a^-1").unwrap(), Word::empty());
        assert!(matches!(p.parse_word("c"), Err(Error::BadIndex(_))));
        assert!(matches!(p.parse_word("a^0"), Err(Error::BadIndex(_))));
    }

    #[test]
    fn rotations_and_powers() {
        let w = Word::from_letters(vec![Letter::new(0, false), Letter::new(1, false)]);
        assert!(w.is_least_rotation());
        let ww = w.concat(&w);
        assert!(ww.is_proper_power());
        assert!(!w.is_proper_power());
        let ba = Word::from_letters(vec![Letter::new(1, false), Letter::new(0, false)]);
        assert!(!ba.is_least_rotation());
    }

    #[test]
    fn exterior_power_of_diagonal() {
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 2.0, 0.5, 0.25]));
        let l2 = exterior_power_rep(&a, 2).unwrap();
        let expected = [8.0, 2.0, 1.0, 1.0, 0.5, 0.125];
        for (i, e) in expected.iter().enumerate() {
            assert!((l2[(i, i)] - e).abs() < 1e-14);
        }
        assert!(matches!(exterior_power_rep(&a, 4), Err(Error::BadIndex(_))));
    }

    #[test]
    fn symmetric_square_of_diagonal_and_rotation() {
        let t = 3.0;
        let s = symmetric_power_rep(&m2([t, 0.0, 0.0, 1.0 / t]), 3).unwrap();
        assert!((s[(0, 0)] - 9.0).abs() < 1e-14 && (s[(1, 1)] - 1.0).abs() < 1e-14);
        assert!((s[(2, 2)] - 1.0 / 9.0).abs() < 1e-14);
        let r = symmetric_power_rep(&rotation(0.4), 4).unwrap();
        assert!((r.transpose() * &r - Matrix::identity(4, 4)).amax() < 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn representations_are_homomorphisms(x in prop::collection::vec(-1.5..1.5f64, 3), y in prop::collection::vec(-1.5..1.5f64, 3)) {
            let make = |v: &[f64]| m2([1.0 + v[0] * v[1], v[0], v[1], 1.0]) * rotation(v[2]);
            let a = make(&x);
            let b = make(&y);
            let ab = &a * &b;
            let s = |m: &Matrix| symmetric_power_rep(m, 4).unwrap();
            prop_assert!((s(&ab) - s(&a) * s(&b)).amax() < 1e-9 * (1.0 + s(&ab).amax()));
            let a4 = symmetric_power_rep(&a, 3).unwrap();
            let k = kappa(&a).unwrap();
            let ks = kappa(&a4).unwrap();
            prop_assert!((ks.alpha(1) - k.alpha(1)).abs() < 1e-9);
        }
    }
}
