mod common;

use common::exact;

fn pass(c: exact::Check) {
    match c {
        Ok(msg) => eprintln!("{msg}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn sectors_match_brute_force_ranges() {
    pass(exact::sector_suite());
}

#[test]
fn feedback_text_round_trips() {
    pass(exact::round_trip_suite());
}

#[test]
fn oracle_labels_match_breadth_first_search() {
    pass(exact::oracle_bfs_suite());
}

#[test]
fn gradients_match_finite_differences() {
    pass(exact::gradient_suite());
}

#[test]
fn identical_configs_give_identical_run_directories() {
    pass(exact::determinism_suite());
}
