use setplay_core::datagen;
use setplay_core::metrics::{self, DistanceConfig};
use setplay_core::model::{self, Point, SetplayFeatures};
use setplay_core::partition::PartitionMatrix;
use setplay_core::pipeline::{self, Cluster, Member, PipelineConfig, Stage1Result, Verdict};

fn paper_corpus(seed: u64) -> Vec<SetplayFeatures> {
    datagen::generate_corpus(&datagen::paper_shape_spec(seed, 0.5))
        .unwrap()
        .iter()
        .map(|p| model::extract_features(&model::parse_setplay(&p.text).unwrap()))
        .collect()
}

fn shifted(f: &SetplayFeatures, dx: f64, tag: &str) -> SetplayFeatures {
    let mut g = f.clone();
    g.name = format!("{}_{tag}", f.name);
    for step in &mut g.steps_list {
        for p in &mut step.our_players_list {
            *p = Point::new(p.x + dx, p.y);
        }
    }
    g
}

fn one_cluster(n: usize) -> Stage1Result {
    Stage1Result {
        sweep: Vec::new(),
        best_c: 1,
        clusters: vec![Cluster {
            id: 0,
            members: (0..n)
                .map(|index| Member {
                    index,
                    membership: 1.0,
                })
                .collect(),
        }],
        partition: PartitionMatrix::uniform(1, n),
        warnings: Vec::new(),
    }
}

#[test]
fn separated_three_plus_three_is_split() {
    let base = &paper_corpus(1)[0];
    let data: Vec<SetplayFeatures> = [0.0, 0.05, 0.1, 12.0, 12.05, 12.1]
        .iter()
        .enumerate()
        .map(|(k, &dx)| shifted(base, dx, &k.to_string()))
        .collect();
    let out = pipeline::stage2(&one_cluster(6), &data, &PipelineConfig::default()).unwrap();
    let g = &out.clusters[0];
    assert_eq!(g.verdict, Verdict::Split);
    assert_eq!(g.c2, Some(2));
    let mut groups: Vec<Vec<usize>> = g.subclusters.iter().map(Cluster::indices).collect();
    groups.sort();
    assert_eq!(groups, vec![vec![0, 1, 2], vec![3, 4, 5]]);

    // brute-force crisp silhouette of that split on level-2 distances
    let cfg = DistanceConfig::default();
    let d = |a: usize, b: usize| metrics::level2_distance(&data[a], &data[b], &cfg);
    let mut total = 0.0;
    for j in 0..6 {
        let (own, other): (Vec<usize>, Vec<usize>) =
            (0..6).filter(|&k| k != j).partition(|&k| k / 3 == j / 3);
        let a = own.iter().map(|&k| d(j, k)).sum::<f64>() / own.len() as f64;
        let b = other.iter().map(|&k| d(j, k)).sum::<f64>() / other.len() as f64;
        total += (b - a) / a.max(b);
    }
    let mean = total / 6.0;
    assert!(mean > 0.9);
    // crisp memberships are near 0/1, so the weighted score is close to the mean
    assert!((g.fs - mean).abs() < 0.05, "fs {} vs crisp {}", g.fs, mean);
}

#[test]
fn stage_one_ignores_step_contents() {
    let data = paper_corpus(2);
    let mut mutated = data.clone();
    for f in &mut mutated {
        for step in &mut f.steps_list {
            step.behaviors_list = vec!["intercept()".to_string()];
            step.our_players_list.clear();
            step.wait_time += 3.0;
        }
    }
    let cfg = PipelineConfig {
        restarts: 3,
        ..Default::default()
    };
    let a = pipeline::stage1(&data, &cfg).unwrap();
    let b = pipeline::stage1(&mutated, &cfg).unwrap();
    assert_eq!(a.fs_by_c(), b.fs_by_c());
    assert_eq!(a.partition, b.partition);
    assert_eq!(a.clusters, b.clusters);
}

#[test]
fn full_run_covers_every_instance_and_reports_seven_scores() {
    let data = paper_corpus(3);
    let cfg = PipelineConfig {
        restarts: 4,
        ..Default::default()
    };
    let out = pipeline::run(&data, &cfg).unwrap();
    for j in 0..data.len() {
        assert!(
            out.stage1.clusters.iter().any(|c| c.indices().contains(&j)),
            "instance {j} uncovered"
        );
    }
    let report = pipeline::report(&data, &out, &cfg);
    assert_eq!(report.stage1.fs_curve.len(), 7);
    assert_eq!(
        report
            .stage1
            .fs_curve
            .iter()
            .map(|r| r.c)
            .collect::<Vec<_>>(),
        (2..=8).collect::<Vec<_>>()
    );
    let best = report
        .stage1
        .fs_curve
        .iter()
        .fold(f64::NEG_INFINITY, |m, r| m.max(r.fs_best));
    let chosen = report
        .stage1
        .fs_curve
        .iter()
        .find(|r| r.fs_best == best)
        .unwrap();
    assert_eq!(chosen.c, report.stage1.best_c);
    for g in &out.stage2.clusters {
        if g.verdict == Verdict::Split {
            assert!(!g.subclusters.is_empty());
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let data = paper_corpus(4);
    let cfg = PipelineConfig {
        restarts: 3,
        ..Default::default()
    };
    let parallel = pipeline::run(&data, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let sequential = pool.install(|| pipeline::run(&data, &cfg)).unwrap();
    assert_eq!(parallel, sequential);
}

#[test]
fn identical_instances_flag_ambiguity() {
    let base = paper_corpus(5)[0].clone();
    let data = vec![base; 6];
    let cfg = PipelineConfig {
        c1_max: 4,
        restarts: 2,
        ..Default::default()
    };
    let s1 = pipeline::stage1(&data, &cfg).unwrap();
    assert_eq!(s1.best_c, 2);
    assert!(s1
        .sweep
        .iter()
        .all(|e| e.restarts.iter().all(|r| r.all_weights_zero)));
    assert!(s1.warnings.iter().any(|w| w.contains("ambiguous")));
}
