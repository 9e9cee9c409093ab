use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use qcwidth::intersections::{
    conjugate_intersection_generators, fiber_product_intersection, intersection_quasiconvexity_constant,
    same_subgroup, split_long_loop, theorem_m,
};
use qcwidth::invariants::{almost_malnormal, height, weak_width, width};
use qcwidth::oracle::{cross_check, oracle_intersection, oracle_subgroup_ball};
use qcwidth::{Alphabet, Delta, Element, Group, GroupConfig, Letter, Mode, Subgroup, SubgroupConfig, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name].iter().collect();
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn load_group(name: &str) -> Arc<Group> {
    Arc::new(GroupConfig::from_json(&fixture(name)).unwrap().build().unwrap())
}

fn load_subgroup(g: &Arc<Group>, name: &str) -> Subgroup {
    SubgroupConfig::from_json(&fixture(name)).unwrap().build(g.clone()).unwrap()
}

fn sub(g: &Arc<Group>, gens: &[&str], k: usize) -> Subgroup {
    Subgroup::new(g.clone(), gens.iter().map(|s| g.parse(s).unwrap()).collect(), k).unwrap()
}

fn names(g: &Group, ws: &[Word]) -> Vec<String> {
    ws.iter().map(|w| g.format(w)).collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_word(rng: &mut ChaCha8Rng, rank: usize, len: usize) -> Word {
    let mut out: Vec<Letter> = Vec::new();
    while out.len() < len {
        let x = Letter::new(rng.gen_range(0..rank), rng.gen_bool(0.5));
        if out.last() != Some(&x.inverse()) {
            out.push(x);
        }
    }
    Word::from_letters(out)
}

fn free_group(rank: usize) -> Arc<Group> {
    let names: Vec<String> = ["a", "b", "c"].iter().take(rank).map(|s| s.to_string()).collect();
    Arc::new(Group::free(Alphabet::new(names).unwrap(), Delta::whole(0)))
}

/// Depth of the Stallings graph: every geodesic between elements of `H`
/// reads a loop in it, so this is a quasiconvexity constant in a free group.
fn stallings_depth(h: &Subgroup) -> usize {
    h.kernel_graph().unwrap().distances(0).into_iter().filter(|&d| d != usize::MAX).max().unwrap_or(0)
}

/// Same subgroup from a Nielsen-transformed generating set.
fn nielsen_twin(h: &Subgroup) -> Subgroup {
    let mut gens: Vec<Word> = h.generators().iter().rev().cloned().collect();
    if gens.len() >= 2 {
        gens[0] = gens[0].mul(&gens[1]);
    }
    Subgroup::new(h.group().clone(), gens, h.k()).unwrap()
}

fn example_invariants(subgroup: &str, weak: usize, w: usize, ht: usize) -> Outcome {
    let g = load_group("g6.json");
    let h = load_subgroup(&g, subgroup);
    let ww = weak_width(&h).map_err(|e| e.to_string())?;
    let wr = width(&h, Mode::ExactSearch).map_err(|e| e.to_string())?;
    let hr = height(&h, Mode::ExactSearch).map_err(|e| e.to_string())?;
    let got = (ww.weak_width, wr.width, hr.height);
    let detail = format!("weak_width={} width={:?} height={:?} L={:?}", got.0, got.1, got.2, names(&g, &ww.l));
    let bounded = ww.bounded || wr.bounded || hr.bounded;
    ensure(got == (weak, Some(w), Some(ht)) && !bounded, || format!("{detail} bounded={bounded}"))?;
    Ok(detail)
}

fn intersection_table() -> Outcome {
    let g = load_group("g6.json");
    let h1 = load_subgroup(&g, "h1.json");
    let parse = |ws: &[&str]| -> Vec<Word> { ws.iter().map(|s| g.parse(s).unwrap()).collect() };
    // (label, base generators, conjugator c, generators of c^-1 base c, expected base ∩ c^-1 base c)
    let cases: [(&str, &[&str], &str, &[&str], &[&str]); 4] = [
        ("H2∩H1", &["x1", "x2"], "t", &["x2", "x3"], &["x2"]),
        ("H4∩H1", &["x1", "x2"], "t^3", &["x4", "x1"], &["x1"]),
        ("H3∩H1", &["x1", "x2"], "t^2", &["x3", "x4"], &[]),
        ("H2∩H4", &["x2", "x3"], "t^2", &["x4", "x1"], &[]),
    ];
    let same = |a: &[Word], b: &[Word]| -> Result<bool, String> {
        if a.is_empty() || b.is_empty() {
            return Ok(a.is_empty() && b.is_empty());
        }
        same_subgroup(&h1, a, b).map_err(|e| e.to_string())
    };
    let mut lines = Vec::new();
    for (label, base_gens, conj, named, expect) in cases {
        let base = sub(&g, base_gens, 0);
        let cw = g.parse(conj).unwrap();
        let expect = parse(expect);
        let conjugated: Vec<Word> = base.generators().iter().map(|s| cw.inverse().mul(s).mul(&cw)).collect();
        ensure(same(&conjugated, &parse(named))?, || format!("{label}: conjugate is not <{}>", named.join(",")))?;
        let conj_sub = Subgroup::new(g.clone(), conjugated, 0).unwrap();
        let fast = conjugate_intersection_generators(&base, &cw).map_err(|e| e.to_string())?;
        let fiber = fiber_product_intersection(&base, &conj_sub).map_err(|e| e.to_string())?;
        let oracle = oracle_intersection(&base, &cw, 6, 8).map_err(|e| e.to_string())?;
        let oracle_words: Vec<Word> =
            oracle.elements.iter().filter(|(e, _)| !e.is_identity()).map(|(_, w)| w.clone()).collect();
        ensure(same(&fast.generating_set, &expect)?, || {
            format!("{label}: generators {:?}", names(&g, &fast.generating_set))
        })?;
        ensure(same(&fiber.generating_set, &expect)?, || {
            format!("{label}: fiber product {:?}", names(&g, &fiber.generating_set))
        })?;
        ensure(same(&oracle_words, &expect)?, || format!("{label}: oracle {:?}", names(&g, &oracle_words)))?;
        let shown = names(&g, &fast.generating_set);
        lines.push(format!("{label}=<{}>", if shown.is_empty() { "1".to_string() } else { shown.join(",") }));
    }
    Ok(lines.join(" "))
}

/// Distance from `p` to the nearest listed element.
fn distance_to(g: &Group, p: &Element, set: &[Element]) -> usize {
    let pinv = g.inverse(p).unwrap();
    set.iter().map(|c| g.geodesic_length(&g.multiply(&pinv, c).unwrap())).min().unwrap_or(usize::MAX)
}

fn prefixes(g: &Group, e: &Element) -> Vec<Element> {
    let w = g.canonical_word(e).unwrap();
    (0..=w.len()).map(|i| g.evaluate(&w.prefix(i)).unwrap()).collect()
}

fn intersection_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let (mut fixtures, mut small_cases, mut va, mut vb, mut vc) = (0, 0, 0, 0, 0);
    while fixtures < 50 {
        let rank = rng.gen_range(2..=3);
        let g = free_group(rank);
        let ngens = rng.gen_range(1..=2);
        let gens: Vec<Word> = (0..ngens)
            .map(|_| {
                let len = rng.gen_range(1..=4);
                random_word(&mut rng, rank, len)
            })
            .collect();
        let probe = Subgroup::new(g.clone(), gens.clone(), 0).unwrap();
        let k = stallings_depth(&probe);
        let h = probe.with_k(k);
        let len = rng.gen_range(1..=3);
        let cw = random_word(&mut rng, rank, len);
        if h.membership(&cw).unwrap().is_in() {
            continue;
        }
        fixtures += 1;
        let ce = g.evaluate(&cw).unwrap();
        let glen = cw.len();

        // (a) small intersections
        let (dmin, _) = h.double_coset_min(&ce).unwrap().unwrap();
        let bound = 2 * k + 2;
        if dmin > 2 * k {
            small_cases += 1;
            let found = oracle_intersection(&h, &cw, bound + 4, 6).unwrap();
            va += found.elements.iter().filter(|(e, _)| g.geodesic_length(e) >= bound).count();
        }

        // (b) the conjugate is K_g-quasiconvex
        let kg = k + 2 * glen;
        let conj_gens: Vec<Word> = gens.iter().map(|s| cw.inverse().mul(s).mul(&cw)).collect();
        let c = Subgroup::new(g.clone(), conj_gens, kg).unwrap();
        let reach = kg + 4;
        let c_ball: Vec<Element> = oracle_subgroup_ball(&c, reach + kg, 6).unwrap().elements.into_keys().collect();
        for x in c_ball.iter().filter(|e| g.geodesic_length(e) <= reach) {
            for p in prefixes(&g, x) {
                if distance_to(&g, &p, &c_ball) > kg {
                    vb += 1;
                }
            }
        }

        // (c) the intersection is K_0-quasiconvex
        let (k0, _, _, _) = intersection_quasiconvexity_constant(&h, &c).unwrap();
        let inter = oracle_intersection(&h, &cw, 2 * k + 2 * glen + 6, 6).unwrap();
        let inter_elems: Vec<Element> = inter.elements.iter().map(|(e, _)| e.clone()).collect();
        for x in &inter_elems {
            for p in prefixes(&g, x) {
                if g.geodesic_length(&p) > k0 && distance_to(&g, &p, &inter_elems) > k0 {
                    vc += 1;
                }
            }
        }
    }
    let detail = format!(
        "fixtures={fixtures} small_intersection_cases={small_cases} violations a={va} b={vb} c={vc}"
    );
    ensure(va == 0 && vb == 0 && vc == 0 && small_cases > 0, || detail.clone())?;
    Ok(detail)
}

fn split_loops() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let g6 = load_group("g6.json");
    let f2 = free_group(2);
    let pairs: Vec<(Subgroup, Word)> = vec![
        (load_subgroup(&g6, "h1.json"), g6.parse("t").unwrap()),
        (load_subgroup(&g6, "h1.json"), g6.parse("t^-1").unwrap()),
        (load_subgroup(&g6, "l1.json"), g6.parse("t").unwrap()),
        (sub(&f2, &["a^2", "b"], 1), f2.parse("a").unwrap()),
        (sub(&f2, &["a", "b a b^-1"], 1), f2.parse("b").unwrap()),
    ];
    let mut done = 0;
    for (h, cw) in &pairs {
        let g = h.group().clone();
        let gens = conjugate_intersection_generators(h, cw).map_err(|e| e.to_string())?.generating_set;
        ensure(!gens.is_empty(), || format!("no intersection for {}", g.format(cw)))?;
        let m = theorem_m(h, cw).map_err(|e| e.to_string())?.ok_or("M over budget")?;
        let twin = nielsen_twin(h);
        let ce = g.evaluate(cw).unwrap();
        let cinv = g.inverse(&ce).unwrap();
        let in_both = |e: &Element| -> bool {
            twin.contains(e).unwrap().0
                && twin.contains(&g.multiply(&g.multiply(&ce, e).unwrap(), &cinv).unwrap()).unwrap().0
        };
        for _ in 0..5 {
            let mut w = Word::empty();
            while w.len() <= m * m {
                let mut letters: Vec<Letter> = w.letters().to_vec();
                while letters.len() <= 2 * m * m {
                    let s = &gens[rng.gen_range(0..gens.len())];
                    let s = if rng.gen_bool(0.8) { s.clone() } else { s.inverse() };
                    letters.extend(s.letters());
                }
                w = g.geodesic_word(&Word::from_letters(letters)).unwrap();
            }
            let r = split_long_loop(h, cw, &w).map_err(|e| format!("{}: {e}", g.format(cw)))?;
            let e1 = g.evaluate(&r.h1).unwrap();
            let e2 = g.evaluate(&r.h2).unwrap();
            let checks = [
                g.multiply(&e1, &e2).unwrap() == g.evaluate(&w).unwrap(),
                in_both(&e1),
                in_both(&e2),
                g.geodesic_length(&e1) < 2 * m * m + 1,
                g.geodesic_length(&e2) < w.len(),
            ];
            ensure(checks.iter().all(|&c| c) && r.m == m, || {
                format!("split of a loop of length {} by {}: {checks:?}", w.len(), g.format(cw))
            })?;
            done += 1;
        }
    }
    ensure(done == 25, || format!("{done} loops"))?;
    Ok(format!("loops={done} postconditions=5/5 each"))
}

fn oracle_equivalence() -> Outcome {
    let mut total = 0;
    let mut checks = 0;
    let mut report = |label: &str, h: &Subgroup, r: usize, pr: usize, conj: &[Word]| -> Result<(), String> {
        let c = cross_check(h, r, pr, 6, &[], conj).map_err(|e| format!("{label}: {e}"))?;
        checks += c.membership.checks + c.cosets.checks + c.double_cosets.checks + c.intersections.checks;
        total += c.total_disagreements();
        ensure(c.total_disagreements() == 0, || format!("{label}: {:?}", c.mismatches))
    };
    let g6 = load_group("g6.json");
    let g6_conj: Vec<Word> = ["t", "t^2", "t^-1", "x3", "x3 t", "x4 t^2"].iter().map(|s| g6.parse(s).unwrap()).collect();
    for name in ["h1.json", "l1.json"] {
        report(name, &load_subgroup(&g6, name), 3, 2, &g6_conj)?;
    }
    let f2 = load_group("f2.json");
    let f2_conj: Vec<Word> = ["a", "b", "a b", "b a^-1"].iter().map(|s| f2.parse(s).unwrap()).collect();
    for name in ["f2_a.json", "f2_a2.json", "f2_ab.json"] {
        report(name, &load_subgroup(&f2, name), 4, 2, &f2_conj)?;
    }
    let z = load_group("z3z3.json");
    let z_conj: Vec<Word> = ["a", "b", "a b^-1"].iter().map(|s| z.parse(s).unwrap()).collect();
    report("z3z3_ab.json", &load_subgroup(&z, "z3z3_ab.json"), 3, 2, &z_conj)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    for case in 0..200 {
        let (g, rank) = match case % 4 {
            0 => (g6.clone(), 5),
            1 => (free_group(3), 3),
            _ => (free_group(2), 2),
        };
        let ngens = rng.gen_range(1..=2);
        let gens: Vec<Word> = (0..ngens)
            .map(|_| loop {
                let len = rng.gen_range(1..=2);
                let w = random_word(&mut rng, rank, len);
                if !g.evaluate(&w).unwrap().is_identity() {
                    break w;
                }
            })
            .collect();
        let h = Subgroup::new(g.clone(), gens, 0).unwrap();
        let conj: Vec<Word> = (0..2)
            .map(|_| {
                let len = rng.gen_range(1..=2);
                random_word(&mut rng, rank, len)
            })
            .collect();
        let label = format!("random case {case} <{}> by {:?}", names(&g, h.generators()).join(","), names(&g, &conj));
        report(&label, &h, 2, 1, &conj)?;
    }
    Ok(format!("fixtures=6 random_cases=200 checks={checks} disagreements={total}"))
}

fn inequalities() -> Outcome {
    let cases = [
        ("g6.json", "h1.json"),
        ("g6.json", "l1.json"),
        ("f2.json", "f2_a.json"),
        ("f2.json", "f2_a2.json"),
        ("f2.json", "f2_ab.json"),
        ("z3z3.json", "z3z3_ab.json"),
    ];
    let mut lines = Vec::new();
    for (gname, hname) in cases {
        let g = load_group(gname);
        let h = load_subgroup(&g, hname);
        let wide = width(&h, Mode::ExactSearch).map_err(|e| e.to_string())?;
        let tall = height(&h, Mode::ExactSearch).map_err(|e| e.to_string())?;
        let wide_paper = width(&h, Mode::PaperGreedy).map_err(|e| e.to_string())?;
        let (malnormal, _) = almost_malnormal(&h).map_err(|e| e.to_string())?;
        let l1 = wide.l1.clone().unwrap_or_default();
        let l_w = wide.l_w.clone().unwrap_or_default();
        let (w, ht) = (wide.width.unwrap(), tall.height.unwrap());
        let ok = ht <= w
            && l1.len() <= wide.l.len()
            && wide.l.len() == wide.weak_width
            && w == l_w.len()
            && w >= l1.len()
            && wide.width_exact >= wide.width_paper
            && tall.height_exact >= tall.height_paper
            && wide_paper.width == wide.width_paper
            && (wide.weak_width == 1) == malnormal;
        let line = format!(
            "{hname}: weak={} |L1|={} width={w}/{:?} height={ht}/{:?}",
            wide.weak_width,
            l1.len(),
            wide.width_paper,
            tall.height_paper
        );
        ensure(ok, || line.clone())?;
        lines.push(line);
    }
    Ok(lines.join("; "))
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 example H1 = <x1,x2>: weak width 3, width 2, height 2", Box::new(|| example_invariants("h1.json", 3, 2, 2))),
        ("2 example L1 = <x1,x2,x3>: weak width 4, width 4, height 3", Box::new(|| example_invariants("l1.json", 4, 4, 3))),
        ("3 intersection table of conjugates of H1", Box::new(intersection_table)),
        ("4 intersection bounds on 50 random free fixtures", Box::new(intersection_bounds)),
        ("5 splitting 25 long loops", Box::new(split_loops)),
        ("6 oracle equivalence, fixtures plus 200 random cases", Box::new(oracle_equivalence)),
        ("7 invariant inequalities on every fixture", Box::new(inequalities)),
    ];
    let mut failed = Vec::new();
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} [{detail}] ({secs:.1}s)"),
            Err(detail) => {
                println!("FAIL criterion {name} [{detail}] ({secs:.1}s)");
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
