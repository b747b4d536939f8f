//! A CMS scoring session: five judges score the example predictions, the
//! store aggregates them, and replaying the log gives back the same state.
//!
//! `cargo run --example cms_session` runs the offline walkthrough;
//! `cargo run --example cms_session -- serve 8080` also serves the HTTP API.

use std::error::Error;
use std::sync::Arc;

use ffr::cms::{replay_log, session_log_path, table_items, CmsStore};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let store = CmsStore::open(dir.path())?;
    let id = populate(&store)?;

    let agg = store.aggregate(&id)?;
    println!("{:<6}{:>8}{:>6}", "item", "cms", "n");
    for (item, a) in &agg.per_item {
        println!("{item:<6}{:>8.2}{:>6}", a.mean, a.n_annotators);
    }
    println!("coverage {:.2}, corpus CMS {:.2}", agg.coverage, agg.corpus_cms.unwrap_or(f64::NAN));

    let replayed = replay_log(&session_log_path(dir.path(), &id))?.expect("non-empty log");
    assert_eq!(replayed.aggregate(), agg);
    println!("\n{}", store.export_csv(&id)?);
    Ok(())
}

/// Creates the session and records the judges' scores; returns its id.
fn populate(store: &CmsStore) -> Result<String, Box<dyn Error>> {
    let id = store.create_session("example predictions", table_items())?;
    let judges = ["ayaba", "codjo", "kossi", "hounsa", "sena"];
    for (judge, value) in judges.iter().zip([0.6, 0.7, 0.6, 0.7, 0.65]) {
        store.submit_score(&id, judge, "4", value)?;
    }
    // a correction: only the later value counts
    store.submit_score(&id, "ayaba", "5", 0.4)?;
    store.submit_score(&id, "ayaba", "5", 0.9)?;
    Ok(id)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) != Some("serve") {
        return run_example();
    }
    let port: u16 = args.get(2).map_or(Ok(8080), |p| p.parse())?;
    let dir = tempfile::tempdir()?;
    let store = Arc::new(CmsStore::open(dir.path())?);
    let id = populate(&store)?;
    println!("session {id}; try GET http://127.0.0.1:{port}/api/sessions/{id}/aggregate");
    tokio::runtime::Runtime::new()?.block_on(ffr::cms::serve(
        store,
        ([127, 0, 0, 1], port).into(),
        None,
        async {
            let _ = tokio::signal::ctrl_c().await;
        },
    ))?;
    Ok(())
}
