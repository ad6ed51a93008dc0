//! Cross-module property tests.

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;

use pathweaver::fixture;
use pathweaver::geo::{LocalProjection, LonLat, Vec2};
use pathweaver::metrics::jaccard;
use pathweaver::pedestrianfer::enumerate_rht_faces;
use pathweaver::raster::ProbabilityRaster;
use pathweaver::street::{build_directed, load_street_network, HalfEdgeId};
use pathweaver::tasking::{
    replay_log, CompletionStatus, LockToken, SimClock, TaskComment, TaskRegion, TaskService,
    TaskState,
};

proptest! {
    #[test]
    fn twin_is_an_involution(seed in 0u64..500) {
        let net = load_street_network(&fixture::jittered_grid_fixture(3, 3, 70.0, seed)).unwrap();
        let g = build_directed(&net).unwrap();
        for i in 0..g.half_edges.len() {
            let id = HalfEdgeId(i);
            prop_assert_ne!(id.twin(), id);
            prop_assert_eq!(id.twin().twin(), id);
            let he = g.half_edge(id);
            let tw = g.half_edge(id.twin());
            prop_assert_eq!(he.origin, tw.target);
            prop_assert_eq!(he.target, tw.origin);
        }
    }

    #[test]
    fn faces_partition_the_half_edges(seed in 0u64..200) {
        let net = load_street_network(&fixture::jittered_grid_fixture(3, 3, 70.0, seed)).unwrap();
        let g = build_directed(&net).unwrap();
        let faces = enumerate_rht_faces(&g, &net);
        let mut seen = HashSet::new();
        for f in &faces {
            for he in &f.walk {
                prop_assert!(seen.insert(*he), "half-edge {:?} in two walks", he);
            }
        }
        prop_assert_eq!(seen.len(), g.half_edges.len());
    }

    #[test]
    fn projection_round_trips(
        lon in -179.0f64..179.0,
        lat in -80.0f64..80.0,
        dx in -5000.0f64..5000.0,
        dy in -5000.0f64..5000.0,
    ) {
        let proj = LocalProjection::new(LonLat::new(lon, lat));
        let p = Vec2::new(dx, dy);
        let back = proj.project(proj.unproject(p));
        prop_assert!(back.dist(p) < 1e-6, "{:?} -> {:?}", p, back);
        let ll = proj.unproject(p);
        let ll2 = proj.unproject(proj.project(ll));
        prop_assert!((ll2.lon - ll.lon).abs() < 1e-12);
        prop_assert!((ll2.lat - ll.lat).abs() < 1e-12);
    }

    #[test]
    fn raster_bytes_round_trip(
        w in 1usize..24,
        h in 1usize..24,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut r = ProbabilityRaster::background(
            w,
            h,
            [0.3, 0.0, rng.gen_range(-10.0..10.0), 0.0, -0.3, rng.gen_range(-10.0..10.0)],
            LonLat::new(rng.gen_range(-170.0..170.0), rng.gen_range(-80.0..80.0)),
        );
        for i in 0..w * h {
            let raw: Vec<f32> = (0..r.planes.len()).map(|_| rng.gen_range(0.0f32..1.0)).collect();
            let sum: f32 = raw.iter().sum();
            for (c, v) in raw.iter().enumerate() {
                r.planes[c][i] = v / sum;
            }
        }
        let bytes = r.write_bytes().unwrap();
        let back = ProbabilityRaster::read_bytes(&bytes).unwrap();
        prop_assert_eq!(back.width, r.width);
        prop_assert_eq!(back.height, r.height);
        prop_assert_eq!(&back.classes, &r.classes);
        prop_assert_eq!(back.transform, r.transform);
        for (a, b) in back.planes.iter().zip(r.planes.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(
        a in prop::collection::btree_set((0usize..8, 0usize..8), 0..20),
        b in prop::collection::btree_set((0usize..8, 0usize..8), 0..20),
    ) {
        let j = jaccard(&a, &b);
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
    }

    #[test]
    fn task_log_replay_matches_live_state(
        ops in prop::collection::vec((0usize..4, 0usize..6, 0u8..4, 0u64..100), 0..80),
    ) {
        let tasks: Vec<TaskRegion> = (0..6)
            .map(|i| TaskRegion {
                id: format!("p/task-{i:03}"),
                project: "p".into(),
                intersection: i,
                polygon: vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
                state: TaskState::Available,
                lock: None,
                comments: Vec::new(),
                fragments: Vec::new(),
            })
            .collect();
        let clock = Arc::new(SimClock::default());
        let mut svc = TaskService::new(tasks.clone(), clock.clone() as Arc<dyn pathweaver::tasking::Clock>);
        let mut tokens: Vec<Option<LockToken>> = vec![None; 4];
        for (client, task, action, advance) in ops {
            clock.advance(advance * 1000);
            let name = format!("client-{client}");
            let task_id = format!("p/task-{task:03}");
            match action {
                0 | 1 => {
                    if let Ok(tok) = svc.acquire_lock(&name, &task_id) {
                        tokens[client] = Some(tok);
                    }
                }
                2 => {
                    if let Some(tok) = tokens[client].take() {
                        let _ = svc.relinquish_lock(&tok);
                    }
                }
                _ => {
                    if let Some(tok) = tokens[client].take() {
                        let comment = TaskComment {
                            completion_status: CompletionStatus::Complete,
                            imagery_ok: true,
                            continue_next: true,
                            free_text: String::new(),
                        };
                        let _ = svc.commit_task(&tok, serde_json::json!({}), comment);
                    }
                }
            }
            // replay of the log prefix reproduces the live state exactly
            let replayed = replay_log(tasks.clone(), &svc.log).unwrap();
            prop_assert_eq!(replayed, svc.snapshot());
        }
    }
}
