//! Synthetic setplay corpora with a known family structure.
//!
//! Each family shares a play mode, an abort condition, a step count and a
//! template of behaviors and positions. Members differ by their number of
//! own players (drawn from the family's range), by positional jitter and by
//! occasional behavior swaps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::format_number;

pub const FIELD_HALF_LENGTH: f64 = 15.0;
pub const FIELD_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayMode {
    PlayOn,
    KickIn,
    GoalKick,
    KoOur,
}

impl PlayMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlayMode::PlayOn => "play_on",
            PlayMode::KickIn => "kick_in",
            PlayMode::GoalKick => "goal_kick",
            PlayMode::KoOur => "ko_our",
        }
    }

    /// Play-mode atom used in `playm` conditions.
    fn condition_atom(&self) -> &'static str {
        match self {
            PlayMode::PlayOn => "play_on",
            PlayMode::KickIn => "ki_our",
            PlayMode::GoalKick => "gk_our",
            PlayMode::KoOur => "ko_our",
        }
    }

    fn opponents(&self) -> u32 {
        match self {
            PlayMode::PlayOn | PlayMode::KickIn => 1,
            PlayMode::GoalKick | PlayMode::KoOur => 0,
        }
    }

    fn abort_condition(&self) -> String {
        let owners = (1..=11)
            .map(|n| format!("(player :team opp :number {n})"))
            .collect::<Vec<_>>()
            .join(" ");
        let bowner = format!("(bowner :players (list {owners}))");
        match self {
            PlayMode::PlayOn => format!("(or {bowner} (not (playm play_on)))"),
            PlayMode::GoalKick => "(and (not (playm play_on)) (not (playm gk_our)))".to_string(),
            PlayMode::KickIn | PlayMode::KoOur => format!(
                "(or {bowner} (and (not (playm play_on)) (not (playm {}))))",
                self.condition_atom()
            ),
        }
    }
}

fn default_jitter() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub play_mode: PlayMode,
    pub count: usize,
    /// Inclusive range of own players per plan.
    pub players_range: [u32; 2],
    /// Inclusive range the family's step count is drawn from.
    pub steps_range: [u32; 2],
    /// Half-width, in meters, of the uniform noise added to positions.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Probability that a plan has one behavior replaced.
    #[serde(default)]
    pub swap_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("family {family}: invalid `{field}`: {reason}")]
    InvalidSpec {
        family: usize,
        field: &'static str,
        reason: String,
    },
}

impl FamilySpec {
    pub fn validate(&self, family: usize) -> Result<(), DatagenError> {
        let bad = |field, reason: &str| {
            Err(DatagenError::InvalidSpec {
                family,
                field,
                reason: reason.to_string(),
            })
        };
        if self.count < 1 {
            return bad("count", "must be at least 1");
        }
        let [pmin, pmax] = self.players_range;
        if pmin < 1 || pmin > pmax || pmax > 11 {
            return bad("players_range", "must satisfy 1 <= min <= max <= 11");
        }
        let [smin, smax] = self.steps_range;
        if smin < 1 || smin > smax {
            return bad("steps_range", "must satisfy 1 <= min <= max");
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return bad("jitter", "must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.swap_probability) {
            return bad("swap_probability", "must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPlan {
    pub name: String,
    pub family: usize,
    pub play_mode: PlayMode,
    pub text: String,
}

/// Four families in the four play modes, 18 plans in total. Only the
/// play_on family varies its player count, so level-1 features show five
/// groups: four families with one of them split in two.
pub fn paper_shape_spec(seed: u64, jitter: f64) -> Vec<FamilySpec> {
    let family = |k: u64, play_mode, count, players_range, steps_range| FamilySpec {
        play_mode,
        count,
        players_range,
        steps_range,
        jitter,
        swap_probability: 0.2,
        seed: seed.wrapping_mul(31).wrapping_add(k),
    };
    vec![
        family(0, PlayMode::PlayOn, 5, [3, 4], [3, 4]),
        family(1, PlayMode::KickIn, 4, [2, 2], [2, 3]),
        family(2, PlayMode::GoalKick, 4, [5, 5], [4, 6]),
        family(3, PlayMode::KoOur, 5, [7, 7], [5, 6]),
    ]
}

#[derive(Debug, Clone)]
enum Action {
    Mov(f64, f64),
    Pos(f64, f64),
    Bto(usize),
    Intercept,
}

impl Action {
    fn render(&self) -> String {
        match self {
            Action::Mov(x, y) => format!("(mov :region (pt :x {} :y {}))", num(*x), num(*y)),
            Action::Pos(x, y) => format!("(pos :region (pt :x {} :y {}))", num(*x), num(*y)),
            Action::Bto(to) => format!(
                "(bto :players (list (playerRole :roleName {})) :type normal)",
                role(*to)
            ),
            Action::Intercept => "(intercept)".to_string(),
        }
    }
}

fn num(v: f64) -> String {
    format_number((v * 1000.0).round() / 1000.0)
}

fn role(k: usize) -> String {
    format!("Player{}", k + 1)
}

fn field_point(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // half-meter grid
    let x = (rng.gen_range(-FIELD_HALF_LENGTH..=FIELD_HALF_LENGTH) * 2.0).round() / 2.0;
    let y = (rng.gen_range(-FIELD_HALF_WIDTH..=FIELD_HALF_WIDTH) * 2.0).round() / 2.0;
    (x, y)
}

fn random_action(rng: &mut ChaCha8Rng, player: usize, players: usize) -> Action {
    match rng.gen_range(0..4) {
        0 => {
            let (x, y) = field_point(rng);
            Action::Mov(x, y)
        }
        1 => {
            let (x, y) = field_point(rng);
            Action::Pos(x, y)
        }
        2 if players > 1 => {
            let mut to = rng.gen_range(0..players - 1);
            if to >= player {
                to += 1;
            }
            Action::Bto(to)
        }
        _ => Action::Intercept,
    }
}

struct StepTemplate {
    wait: u32,
    abort: u32,
    own_positions: Vec<(f64, f64)>,
    opp_positions: Vec<(f64, f64)>,
    actions: Vec<Action>,
    receiver: usize,
}

struct FamilyTemplate {
    steps: Vec<StepTemplate>,
    max_players: usize,
}

fn family_template(spec: &FamilySpec, rng: &mut ChaCha8Rng) -> FamilyTemplate {
    let [smin, smax] = spec.steps_range;
    let steps = rng.gen_range(smin..=smax) as usize;
    let max_players = spec.players_range[1] as usize;
    let opponents = spec.play_mode.opponents() as usize;
    let steps = (0..steps)
        .map(|_| {
            let wait = rng.gen_range(0..=2);
            StepTemplate {
                wait,
                abort: wait + rng.gen_range(10..=30),
                own_positions: (0..max_players).map(|_| field_point(rng)).collect(),
                opp_positions: (0..opponents).map(|_| field_point(rng)).collect(),
                actions: (0..max_players)
                    .map(|p| random_action(rng, p, spec.players_range[0] as usize))
                    .collect(),
                receiver: rng.gen_range(0..spec.players_range[0] as usize),
            }
        })
        .collect();
    FamilyTemplate { steps, max_players }
}

fn jittered(p: (f64, f64), jitter: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    if jitter == 0.0 {
        return p;
    }
    let x = p.0 + rng.gen_range(-jitter..=jitter);
    let y = p.1 + rng.gen_range(-jitter..=jitter);
    (
        x.clamp(-FIELD_HALF_LENGTH, FIELD_HALF_LENGTH),
        y.clamp(-FIELD_HALF_WIDTH, FIELD_HALF_WIDTH),
    )
}

fn render_plan(
    name: &str,
    id: usize,
    spec: &FamilySpec,
    template: &FamilyTemplate,
    players: usize,
    swap: Option<(usize, usize, Action)>,
    rng: &mut ChaCha8Rng,
) -> String {
    let opponents = spec.play_mode.opponents();
    let mut out =
        format!("(setplay :name {name} :id {id} :invertible false\n  :players\n  (list\n");
    for k in 0..players {
        out += &format!("    (playerRole :roleName {})\n", role(k));
    }
    for n in 1..=opponents {
        out += &format!("    (player :team opp :number {n})\n");
    }
    out += "  )\n";
    out += &format!(
        "  :abortCond {}\n  :steps\n  (seq\n",
        spec.play_mode.abort_condition()
    );
    for (z, step) in template.steps.iter().enumerate() {
        out += &format!(
            "  (step :id {z} :waitTime {} :abortTime {}\n    :participants\n    (list\n",
            step.wait, step.abort
        );
        for k in 0..players {
            let (x, y) = jittered(step.own_positions[k], spec.jitter, rng);
            out += &format!(
                "      (at (playerRole :roleName {}) (pt :x {} :y {}))\n",
                role(k),
                num(x),
                num(y)
            );
        }
        for (n, &p) in step.opp_positions.iter().enumerate() {
            let (x, y) = jittered(p, spec.jitter, rng);
            out += &format!(
                "      (at (player :team opp :number {}) (pt :x {} :y {}))\n",
                n + 1,
                num(x),
                num(y)
            );
        }
        out += "    )\n";
        let condition = if z == 0 {
            format!("(playm {})", spec.play_mode.condition_atom())
        } else {
            format!(
                "(bowner :players (list (playerRole :roleName {})))",
                role(template.steps[z - 1].receiver)
            )
        };
        out += &format!(
            "    :condition {condition}\n    :leadPlayer (playerRole :roleName {})\n",
            role(0)
        );
        out += &format!(
            "    :transitions\n    (list\n      (nextStep :id {}\n        :directives\n        (list\n",
            z + 1
        );
        for k in 0..players {
            let action = match &swap {
                Some((sz, sk, a)) if *sz == z && *sk == k => a,
                _ => &step.actions[k],
            };
            let action = match action {
                // pass targets must exist in this member
                Action::Bto(to) if *to >= players => &Action::Intercept,
                a => a,
            };
            out += &format!(
                "          (do :players (list (playerRole :roleName {})) :actions (list {}))\n",
                role(k),
                action.render()
            );
        }
        out += "        )\n      )\n    )\n  )\n";
    }
    out += "  )\n)\n";
    out
}

/// Generate setplay texts for every family, in family order.
pub fn generate_corpus(specs: &[FamilySpec]) -> Result<Vec<GeneratedPlan>, DatagenError> {
    for (i, spec) in specs.iter().enumerate() {
        spec.validate(i)?;
    }
    let mut plans = Vec::new();
    for (family, spec) in specs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let template = family_template(spec, &mut rng);
        for k in 0..spec.count {
            let [pmin, pmax] = spec.players_range;
            let players = (rng.gen_range(pmin..=pmax) as usize).min(template.max_players);
            let swap = if spec.swap_probability > 0.0 && rng.gen_bool(spec.swap_probability) {
                let z = rng.gen_range(0..template.steps.len());
                let p = rng.gen_range(0..players);
                let mut candidates: Vec<Action> = (0..4)
                    .map(|_| random_action(&mut rng, p, players))
                    .collect();
                candidates.shuffle(&mut rng);
                Some((z, p, candidates.swap_remove(0)))
            } else {
                None
            };
            let name = format!("{}_{}_{}", spec.play_mode.as_str(), family, k);
            let id = plans.len() + 1;
            let text = render_plan(&name, id, spec, &template, players, swap, &mut rng);
            plans.push(GeneratedPlan {
                name,
                family,
                play_mode: spec.play_mode,
                text,
            });
        }
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{level1_distance, level2_distance, DistanceConfig};
    use crate::model::{extract_features, parse_setplay, validate, SetplayFeatures};

    fn features(plans: &[GeneratedPlan]) -> Vec<SetplayFeatures> {
        plans
            .iter()
            .map(|p| extract_features(&parse_setplay(&p.text).unwrap()))
            .collect()
    }

    #[test]
    fn paper_shape_corpus() {
        let plans = generate_corpus(&paper_shape_spec(3, 0.3)).unwrap();
        assert_eq!(plans.len(), 18);
        for p in &plans {
            let sp = parse_setplay(&p.text).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert!(validate(&sp).is_empty());
        }
        let f = features(&plans);
        let shapes: std::collections::BTreeSet<String> = f
            .iter()
            .map(|x| serde_json::to_string(&x.abort_condition).unwrap())
            .collect();
        assert_eq!(shapes.len(), 4);
        for x in &f {
            assert!((1..=8).contains(&x.our_players_number));
            assert!((2..=6).contains(&x.steps_count));
        }
    }

    #[test]
    fn no_noise_means_no_step_terms() {
        let spec = FamilySpec {
            play_mode: PlayMode::KickIn,
            count: 4,
            players_range: [3, 3],
            steps_range: [3, 3],
            jitter: 0.0,
            swap_probability: 0.0,
            seed: 11,
        };
        let f = features(&generate_corpus(&[spec]).unwrap());
        let cfg = DistanceConfig::default();
        for a in &f {
            for b in &f {
                assert_eq!(level2_distance(a, b, &cfg), level1_distance(a, b));
            }
        }
    }

    #[test]
    fn single_plan_family() {
        let spec = FamilySpec {
            play_mode: PlayMode::GoalKick,
            count: 1,
            players_range: [2, 2],
            steps_range: [2, 2],
            jitter: 0.5,
            swap_probability: 0.0,
            seed: 0,
        };
        assert_eq!(generate_corpus(&[spec]).unwrap().len(), 1);
    }

    #[test]
    fn rejects_empty_family() {
        let mut spec = paper_shape_spec(0, 0.1);
        spec[2].count = 0;
        assert_eq!(
            generate_corpus(&spec),
            Err(DatagenError::InvalidSpec {
                family: 2,
                field: "count",
                reason: "must be at least 1".into()
            })
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_corpus(&paper_shape_spec(5, 0.5)).unwrap();
        let b = generate_corpus(&paper_shape_spec(5, 0.5)).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&paper_shape_spec(6, 0.5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn families_are_farther_apart_than_members() {
        // holds for jitter up to 1 m: level-1 features ignore positions
        for seed in 0..10 {
            let plans = generate_corpus(&paper_shape_spec(seed, 1.0)).unwrap();
            let f = features(&plans);
            let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
            for i in 0..f.len() {
                for j in (i + 1)..f.len() {
                    let d = level1_distance(&f[i], &f[j]);
                    if plans[i].family == plans[j].family {
                        within += d;
                        nw += 1;
                    } else {
                        between += d;
                        nb += 1;
                    }
                }
            }
            assert!(between / nb as f64 > within / nw as f64, "seed {seed}");
        }
    }
}
