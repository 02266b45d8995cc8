#[path = "support/audit.rs"]
mod audit;

#[test]
fn labels_agree_with_ground_truth() {
    let r = audit::run_audit(11, 100);
    println!("{r:?}");
    assert!(r.wall_ltf.total > 10_000);
    assert!(r.box_stf.total > 500);
    assert!(r.disc_stf.total > 200);
    assert!(r.wall_ltf.rate() >= 0.95, "wall LTF {}", r.wall_ltf.rate());
    assert!(r.box_stf.rate() >= 0.90, "box STF {}", r.box_stf.rate());
    assert!(r.disc_stf.rate() < 0.10, "disc STF {}", r.disc_stf.rate());
}

#[test]
fn audit_is_seed_stable() {
    for seed in [1, 2, 3] {
        let r = audit::run_audit(seed, 40);
        assert!(r.wall_ltf.rate() >= 0.95);
        assert!(r.box_stf.rate() >= 0.90);
        assert!(r.disc_stf.rate() < 0.10);
    }
}
