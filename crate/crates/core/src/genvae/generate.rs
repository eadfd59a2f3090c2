//! Latent-space property optimization and candidate decoding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chem::{Composition, Element};
use crate::cif::{Lattice, Site, Structure};
use crate::dataset::MaterialRecord;

use super::model::VaeModel;
use super::{featurize, CandidateVector, Normalization, VaeError, Vocab};

/// A differentiable score predictor over the latent space.
pub trait PropertyHead: Sync {
    fn score(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
}

/// The model's own head mapped back to score units.
pub struct VaeHead<'a> {
    pub model: &'a VaeModel,
    pub norm: &'a Normalization,
}

impl PropertyHead for VaeHead<'_> {
    fn score(&self, z: &[f64]) -> f64 {
        self.norm
            .unit_to_score(self.model.predict_property(z).expect("latent dimension"))
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let g = self.model.property_gradient(z).expect("latent dimension");
        g.into_iter().map(|v| v * self.norm.score_sd).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentOptions {
    pub steps: usize,
    pub step_size: f64,
    /// Added to the score before inverting.
    pub epsilon: f64,
    /// Caps the L2 length of a single step; the inverse objective has a pole
    /// where the score crosses -epsilon.
    pub max_step: Option<f64>,
    /// Keep every n-th point of the trajectory (the final point is always kept).
    pub record_every: usize,
}

impl Default for LatentOptions {
    fn default() -> Self {
        LatentOptions {
            steps: 5000,
            step_size: 1e-3,
            epsilon: 1e-6,
            max_step: Some(0.1),
            record_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub z: Vec<f64>,
    /// Sampled (step, z) points, starting with step 0.
    pub points: Vec<(usize, Vec<f64>)>,
    /// Objective before each step and after the last one.
    pub objective: Vec<f64>,
    pub stopped_early: bool,
}

impl LatentTrajectory {
    /// Fraction of steps that did not increase the objective.
    pub fn monotone_fraction(&self) -> f64 {
        if self.objective.len() < 2 {
            return 1.0;
        }
        let ok = self.objective.windows(2).filter(|w| w[1] <= w[0]).count();
        ok as f64 / (self.objective.len() - 1) as f64
    }
}

/// Gradient descent on 1 / (score(z) + epsilon).
pub fn latent_optimize(head: &dyn PropertyHead, z0: &[f64], opts: &LatentOptions) -> LatentTrajectory {
    let every = opts.record_every.max(1);
    let objective_at = |z: &[f64]| 1.0 / (head.score(z) + opts.epsilon);
    let mut z = z0.to_vec();
    let mut obj = objective_at(&z);
    let mut out = LatentTrajectory {
        z: z.clone(),
        points: vec![(0, z.clone())],
        objective: vec![obj],
        stopped_early: false,
    };
    if !obj.is_finite() {
        out.stopped_early = true;
        return out;
    }
    for step in 1..=opts.steps {
        let s = head.score(&z) + opts.epsilon;
        // -d/dz 1/s = s' / s^2
        let factor = opts.step_size / (s * s);
        let mut delta: Vec<f64> = head.gradient(&z).iter().map(|g| factor * g).collect();
        if let Some(cap) = opts.max_step {
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm > cap {
                delta.iter_mut().for_each(|d| *d *= cap / norm);
            }
        }
        let next: Vec<f64> = z.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let next_obj = objective_at(&next);
        if !next_obj.is_finite() || next.iter().any(|v| !v.is_finite()) {
            out.stopped_early = true;
            break;
        }
        z = next;
        obj = next_obj;
        out.objective.push(obj);
        if step % every == 0 {
            out.points.push((step, z.clone()));
        }
    }
    if out.points.last().map(|p| &p.1) != Some(&z) {
        out.points.push((out.objective.len() - 1, z.clone()));
    }
    out.z = z;
    out
}

struct Template {
    id: String,
    x: Vec<f64>,
    structure: Structure,
}

/// Training structures used as coordinate templates for decoded candidates.
pub struct TemplateLibrary {
    templates: Vec<Template>,
}

impl TemplateLibrary {
    pub fn from_records(records: &[MaterialRecord], vocab: &Vocab, norm: &Normalization) -> Result<Self, VaeError> {
        let templates = records
            .iter()
            .filter(|r| r.structure.is_some())
            .map(|r| {
                Ok(Template {
                    id: r.id.clone(),
                    x: norm.apply(&featurize(r, vocab)?),
                    structure: r.structure.clone().expect("filtered"),
                })
            })
            .collect::<Result<Vec<_>, VaeError>>()?;
        if templates.is_empty() {
            return Err(VaeError::Empty("template library"));
        }
        Ok(TemplateLibrary { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    fn nearest(&self, x: &[f64]) -> &Template {
        let d = |t: &Template| t.x.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        self.templates
            .iter()
            .min_by(|a, b| d(a).total_cmp(&d(b)))
            .expect("non-empty library")
    }

    /// Sites for `formula` on the decoded lattice: positions of same-element
    /// template sites first, then unused template positions, then a Halton
    /// sequence for anything left.
    fn build(&self, x: &[f64], formula: &Composition, lattice: [f64; 6]) -> (String, Structure) {
        let t = self.nearest(x);
        let mut used = vec![false; t.structure.sites.len()];
        let mut sites = Vec::new();
        let mut pending: Vec<Element> = Vec::new();
        for (e, n) in formula.iter() {
            let mut placed = 0;
            for (i, s) in t.structure.sites.iter().enumerate() {
                if placed == n {
                    break;
                }
                if !used[i] && s.element == e {
                    used[i] = true;
                    sites.push(Site::new(e, s.frac));
                    placed += 1;
                }
            }
            pending.extend(std::iter::repeat_n(e, (n - placed) as usize));
        }
        let mut halton = 1u32;
        for e in pending {
            let frac = match used.iter().position(|u| !u) {
                Some(i) => {
                    used[i] = true;
                    t.structure.sites[i].frac
                }
                None => {
                    halton += 1;
                    [
                        radical_inverse(halton, 2),
                        radical_inverse(halton, 3),
                        radical_inverse(halton, 5),
                    ]
                }
            };
            sites.push(Site::new(e, frac));
        }
        let structure = Structure {
            lattice: Lattice::from_array(lattice),
            sites,
            source_id: Some(format!("template:{}", t.id)),
        };
        (t.id.clone(), structure)
    }
}

fn radical_inverse(mut i: u32, base: u32) -> f64 {
    let (mut out, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub formula: Composition,
    pub vector: CandidateVector,
    /// Normalized decoder output, the estimator's input space.
    pub x: Vec<f64>,
    pub latent: Vec<f64>,
    /// The property head's score at the optimized latent point.
    pub predicted_score: f64,
    pub structure: Structure,
    /// Coordinates are copied from this training structure, not generated.
    pub template_id: String,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub n: usize,
    pub seed: u64,
    pub latent: LatentOptions,
    /// Fresh prior draws allowed when a decode rounds to all zeros.
    pub max_attempts: usize,
    pub parallel: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            n: 1000,
            seed: 0,
            latent: LatentOptions::default(),
            max_attempts: 16,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub candidates: Vec<Candidate>,
    /// Draw indices whose every attempt decoded to an empty composition.
    pub discarded: Vec<usize>,
}

/// Draw from the prior, optimize each draw against the property head, decode
/// and round. Each draw `i` has its own noise stream, so the output does not
/// depend on scheduling.
pub fn generate(
    model: &VaeModel,
    vocab: &Vocab,
    norm: &Normalization,
    templates: &TemplateLibrary,
    opts: &GenerateOptions,
) -> Result<Generated, VaeError> {
    model.validate()?;
    if vocab.len() != model.arch.n_counts || norm.dim() != model.arch.input_dim {
        return Err(VaeError::Dimension {
            expected: model.arch.input_dim,
            got: norm.dim(),
        });
    }
    if opts.max_attempts == 0 {
        return Err(VaeError::Hyper("max_attempts must be positive".into()));
    }
    let head = VaeHead { model, norm };
    let one = |i: usize| -> Result<Option<Candidate>, VaeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        for attempt in 1..=opts.max_attempts {
            let z0: Vec<f64> = (0..model.latent_dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let traj = latent_optimize(&head, &z0, &opts.latent);
            let x = model.decode(&traj.z)?;
            let mut vector = norm.invert(&x);
            let Some(formula) = vector.composition(vocab) else {
                continue;
            };
            vector.counts = vocab.elements().iter().map(|e| formula.count(*e) as f64).collect();
            vector.w_h2 = formula.hydrogen_weight_fraction();
            let (template_id, structure) = templates.build(&x, &formula, vector.lattice);
            return Ok(Some(Candidate {
                id: format!("gen-{i:04}"),
                formula,
                vector,
                x,
                predicted_score: head.score(&traj.z),
                latent: traj.z,
                structure,
                template_id,
                attempts: attempt,
            }));
        }
        log::warn!(
            "draw {i}: {} attempts decoded to an empty composition; discarded",
            opts.max_attempts
        );
        Ok(None)
    };
    let results: Vec<Result<Option<Candidate>, VaeError>> = if opts.parallel {
        (0..opts.n).into_par_iter().map(one).collect()
    } else {
        (0..opts.n).map(one).collect()
    };
    let mut out = Generated {
        candidates: Vec::with_capacity(opts.n),
        discarded: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(c) => out.candidates.push(c),
            None => out.discarded.push(i),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_formula;
    use crate::genvae::model::VaeArch;

    struct NegSquaredNorm;
    impl PropertyHead for NegSquaredNorm {
        fn score(&self, z: &[f64]) -> f64 {
            -z.iter().map(|v| v * v).sum::<f64>()
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            z.iter().map(|v| -2.0 * v).collect()
        }
    }

    /// score = 1 - 0.1 * |z - a|^2, positive near a.
    struct Quadratic {
        a: Vec<f64>,
    }
    impl PropertyHead for Quadratic {
        fn score(&self, z: &[f64]) -> f64 {
            1.0 - 0.1 * z.iter().zip(&self.a).map(|(v, a)| (v - a).powi(2)).sum::<f64>()
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            z.iter().zip(&self.a).map(|(v, a)| -0.2 * (v - a)).collect()
        }
    }

    #[test]
    fn surrogate_moves_toward_origin() {
        let z0 = vec![1.5, -2.0, 0.7];
        let t = latent_optimize(&NegSquaredNorm, &z0, &LatentOptions::default());
        let norm = |z: &[f64]| z.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm(&t.z) < norm(&z0));
    }

    #[test]
    fn zero_steps_and_zero_step_size_are_identity() {
        let z0 = vec![0.3, 0.4];
        let t = latent_optimize(
            &NegSquaredNorm,
            &z0,
            &LatentOptions {
                steps: 0,
                ..LatentOptions::default()
            },
        );
        assert_eq!(t.z, z0);
        assert_eq!(t.objective.len(), 1);
        let t = latent_optimize(
            &NegSquaredNorm,
            &z0,
            &LatentOptions {
                step_size: 0.0,
                ..LatentOptions::default()
            },
        );
        assert_eq!(t.z, z0);
    }

    #[test]
    fn quadratic_head_is_monotone() {
        let head = Quadratic {
            a: vec![0.5, -0.5, 1.0],
        };
        let t = latent_optimize(&head, &[1.5, 0.5, 0.0], &LatentOptions::default());
        assert_eq!(t.objective.len(), 5001);
        assert!(t.monotone_fraction() >= 0.95, "{}", t.monotone_fraction());
        assert!(t.objective.last() < t.objective.first());
        assert_eq!(t.points.first().unwrap().0, 0);
        assert_eq!(t.points.last().unwrap().0, 5000);
    }

    #[test]
    fn non_finite_objective_stops() {
        struct Pole;
        impl PropertyHead for Pole {
            fn score(&self, z: &[f64]) -> f64 {
                if z[0] > 0.5 {
                    f64::NAN
                } else {
                    z[0]
                }
            }
            fn gradient(&self, _: &[f64]) -> Vec<f64> {
                vec![1.0]
            }
        }
        let t = latent_optimize(&Pole, &[0.4], &LatentOptions::default());
        assert!(t.stopped_early);
        assert!(t.z[0] <= 0.5 && t.objective.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn halton_values() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(2, 3) - 2.0 / 3.0).abs() < 1e-15);
    }

    fn record(id: &str, formula: &str, a: f64) -> MaterialRecord {
        let c = parse_formula(formula).unwrap();
        let mut r = MaterialRecord::new(id, c.clone(), -0.4);
        let sites = c
            .iter()
            .flat_map(|(e, n)| (0..n).map(move |i| Site::new(e, [0.25 * i as f64, 0.5, 0.1])))
            .collect();
        r.structure = Some(Structure {
            lattice: Lattice::cubic(a),
            sites,
            source_id: None,
        });
        r
    }

    fn setup() -> (VaeModel, Vocab, Normalization, TemplateLibrary) {
        let recs = [
            record("a", "TiH2", 4.0),
            record("b", "MgH2", 4.5),
            record("c", "LiAlH4", 5.0),
        ];
        let vocab = Vocab::from_records(&recs);
        let vs: Vec<_> = recs.iter().map(|r| featurize(r, &vocab).unwrap()).collect();
        let norm = Normalization::fit(&vs, &[0.03, 0.05, 0.07]).unwrap();
        let lib = TemplateLibrary::from_records(&recs, &vocab, &norm).unwrap();
        let mut m = VaeModel::new(VaeArch::new(norm.dim(), vocab.len()), 7).unwrap();
        // Positive count biases so decodes are never empty.
        m.decoder.layers.last_mut().unwrap().b[..vocab.len()].fill(2.0);
        (m, vocab, norm, lib)
    }

    #[test]
    fn generate_counts_and_determinism() {
        let (m, vocab, norm, lib) = setup();
        let opts = GenerateOptions {
            n: 12,
            seed: 5,
            latent: LatentOptions {
                steps: 50,
                ..LatentOptions::default()
            },
            ..GenerateOptions::default()
        };
        let a = generate(&m, &vocab, &norm, &lib, &opts).unwrap();
        assert_eq!(a.candidates.len() + a.discarded.len(), 12);
        assert_eq!(a.candidates.len(), 12);
        let b = generate(
            &m,
            &vocab,
            &norm,
            &lib,
            &GenerateOptions {
                parallel: false,
                ..opts.clone()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        for c in &a.candidates {
            assert_eq!(c.structure.sites.len() as u64, c.formula.total_atoms());
            assert_eq!(c.structure.composition().unwrap(), c.formula);
            assert!(c.vector.counts.iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
        }
        let none = generate(&m, &vocab, &norm, &lib, &GenerateOptions { n: 0, ..opts }).unwrap();
        assert!(none.candidates.is_empty());
    }

    #[test]
    fn empty_decodes_are_discarded() {
        let (mut m, vocab, norm, lib) = setup();
        let n_counts = vocab.len();
        let last = m.decoder.layers.last_mut().unwrap();
        last.w.iter_mut().for_each(|w| *w = 0.0);
        last.b[..n_counts].fill(-40.0);
        let opts = GenerateOptions {
            n: 3,
            latent: LatentOptions {
                steps: 2,
                ..LatentOptions::default()
            },
            max_attempts: 2,
            ..GenerateOptions::default()
        };
        let out = generate(&m, &vocab, &norm, &lib, &opts).unwrap();
        assert!(out.candidates.is_empty());
        assert_eq!(out.discarded, vec![0, 1, 2]);
    }
}
