//! Planner choices on a movie-like database with rare high scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagexec::fixtures::write_table;
use tagexec::plan::PlanContext;
use tagexec::{prepare, DataType, Database, LogicMode, PlanOptions, Planner, StoreOptions, Value};

const MOVIES: usize = 20_000;

/// `title(id, title, year)` and one score per movie; only movies 1 and 2
/// score above 9.0.
fn movie_world(dir: &std::path::Path) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words = [
        "night", "river", "house", "storm", "glass", "queen", "train", "dream",
    ];
    let mut titles = Vec::new();
    let mut scores = Vec::new();
    for id in 1..=MOVIES as i64 {
        let title = match id {
            1 => "The Godfather".to_string(),
            2 => "The Lord of the Rings".to_string(),
            3 => "The Godfather Part III".to_string(),
            4 => "Lord of War".to_string(),
            _ => format!(
                "{} {} {}",
                words[rng.gen_range(0..8)],
                words[rng.gen_range(0..8)],
                id
            ),
        };
        titles.push(vec![
            Value::Int(id),
            Value::Str(title),
            Value::Int(rng.gen_range(1950..2020)),
        ]);
        let score = match id {
            1 => "9.2".to_string(),
            2 => "9.3".to_string(),
            _ => format!("{}.{}", rng.gen_range(1..9), rng.gen_range(0..10)),
        };
        scores.push(vec![Value::Str(score), Value::Int(id)]);
    }
    write_table(
        dir,
        "title",
        &[
            ("id", DataType::Int64, false),
            ("title", DataType::String, false),
            ("year", DataType::Int64, false),
        ],
        &titles,
    )
    .unwrap();
    write_table(
        dir,
        "movie_info_idx",
        &[
            ("score", DataType::String, false),
            ("movie_id", DataType::Int64, false),
        ],
        &scores,
    )
    .unwrap();
    Database::open(dir, StoreOptions::default()).unwrap()
}

fn shape(db: &Database, sql: &str, planner: Planner) -> (Vec<String>, f64) {
    let prep = prepare(db, sql, LogicMode::Auto).unwrap();
    let ctx =
        PlanContext::new(db, &prep.query, prep.tree.as_ref(), PlanOptions::default()).unwrap();
    let plan = ctx.plan(planner).unwrap();
    let text = ctx.explain(&plan, false);
    // drop the projection line and its indentation
    let lines = text.lines().skip(1).map(|l| l[2..].to_string()).collect();
    (lines, plan.cost())
}

const FROM: &str =
    "SELECT * FROM title AS t JOIN movie_info_idx AS mi_idx ON t.id = mi_idx.movie_id WHERE ";

#[test]
fn pullup_moves_expensive_like_above_join() {
    let dir = tempfile::tempdir().unwrap();
    let db = movie_world(dir.path());
    let sql = format!(
        "{FROM}(mi_idx.score = '9.2' OR mi_idx.score = '9.3') AND t.title ILIKE '%godfather%'"
    );
    let (lines, cost) = shape(&db, &sql, Planner::TPullup);
    assert_eq!(
        &lines[..3],
        [
            "Filter(t.title ILIKE '%godfather%')",
            "  Join(t.id = mi_idx.movie_id)",
            "    Table(title as t)",
        ]
    );
    // equally selective score filters stack in predicate order
    assert_eq!(
        &lines[3..],
        [
            "    Filter(mi_idx.score = '9.3')",
            "      Filter(mi_idx.score = '9.2')",
            "        Table(movie_info_idx as mi_idx)",
        ]
    );
    let (_, push) = shape(&db, &sql, Planner::TPushdown);
    assert!(cost < push);
    let (combined, _) = shape(&db, &sql, Planner::TCombined);
    assert_eq!(combined, lines);
}

#[test]
fn iterpush_pushes_only_the_selective_score() {
    let dir = tempfile::tempdir().unwrap();
    let db = movie_world(dir.path());
    let sql = format!(
        "{FROM}mi_idx.score > '9.0' AND (t.title ILIKE '%godfather%' OR t.title ILIKE '%lord%')"
    );
    let (lines, cost) = shape(&db, &sql, Planner::TIterPush);
    assert_eq!(lines.len(), 6, "{lines:#?}");
    let mut likes = vec![lines[0].trim().to_string(), lines[1].trim().to_string()];
    likes.sort();
    assert_eq!(
        likes,
        [
            "Filter(t.title ILIKE '%godfather%')",
            "Filter(t.title ILIKE '%lord%')"
        ]
    );
    assert_eq!(
        &lines[2..],
        [
            "    Join(t.id = mi_idx.movie_id)",
            "      Table(title as t)",
            "      Filter(mi_idx.score > '9.0')",
            "        Table(movie_info_idx as mi_idx)",
        ]
    );
    let (push_lines, push) = shape(&db, &sql, Planner::TPushdown);
    assert_ne!(push_lines, lines);
    assert!(cost < push);
    let (_, combined) = shape(&db, &sql, Planner::TCombined);
    assert!(combined <= cost);
}

#[test]
fn free_filters_never_pull_up() {
    let dir = tempfile::tempdir().unwrap();
    let db = movie_world(dir.path());
    let sql = format!(
        "{FROM}(mi_idx.score = '9.2' OR mi_idx.score = '9.3') AND t.title ILIKE '%godfather%'"
    );
    let prep = prepare(&db, &sql, LogicMode::Auto).unwrap();
    let mut opts = PlanOptions::default();
    opts.factors.alpha = 0.0;
    let ctx = PlanContext::new(&db, &prep.query, prep.tree.as_ref(), opts).unwrap();
    let pull = ctx.tpullup().unwrap();
    let push = ctx.tpushdown().unwrap();
    assert_eq!(ctx.explain(&pull, false), ctx.explain(&push, false));
}

#[test]
fn examples_return_the_same_rows_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let db = movie_world(dir.path());
    for pred in [
        "(mi_idx.score = '9.2' OR mi_idx.score = '9.3') AND t.title ILIKE '%godfather%'",
        "mi_idx.score > '9.0' AND (t.title ILIKE '%godfather%' OR t.title ILIKE '%lord%')",
    ] {
        let sql = format!("{FROM}{pred}");
        for p in Planner::ALL {
            let run = tagexec::run_query(&db, &sql, p, Default::default()).unwrap();
            let expect = if pred.starts_with('(') { 1 } else { 2 };
            assert_eq!(run.rows.count(), expect, "{p:?} {pred}");
        }
    }
}
