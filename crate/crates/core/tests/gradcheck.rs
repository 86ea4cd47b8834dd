use mivit::gradcheck::{check_module, Module, TOLERANCE};

#[test]
fn every_module_matches_finite_differences() {
    for m in Module::ALL {
        for seed in 0..3 {
            let rep = check_module(m, seed).unwrap();
            assert!(rep.max_rel_error < TOLERANCE, "{} seed {seed}: {rep:?}", m.name());
            assert!(rep.skipped * 10 < rep.coordinates, "{} seed {seed}: too many kinks {rep:?}", m.name());
        }
    }
}

#[test]
fn module_names_parse() {
    assert_eq!(Module::parse("all").unwrap(), Module::ALL.to_vec());
    assert_eq!(Module::parse("iac").unwrap(), vec![Module::Iac]);
    assert!(Module::parse("decoder").is_err());
}
