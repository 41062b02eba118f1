"""Smoke test for the `sdft` extension: summarize, compile rules, track, validate."""

import json

import sdft


def main():
    fig1 = sdft.Module(sdft.FIG1_IR)
    assert fig1.library_functions == ["memcpy", "student_cpy"], fig1.library_functions
    assert "main" in fig1.functions
    assert sdft.Module(fig1.to_ir()).to_ir() == fig1.to_ir()

    sums = sdft.summarize(fig1)
    assert sorted(sums) == ["memcpy", "student_cpy"]
    for text in sums.values():
        json.loads(text)

    rules = sdft.generate_rules(fig1)
    for mode in ("instr", "hybrid"):
        rep = json.loads(sdft.run(fig1, mode=mode, rules=rules, taint_config=sdft.FIG1_TAINT))
        assert rep["sink_hits"], mode

    assert fig1.pdg_dot("memcpy").startswith("digraph")

    lib = sdft.Module(sdft.LIB_IR)
    lib_rules = sdft.generate_rules(lib)
    cmp = json.loads(sdft.compare(lib, lib_rules, "memcpy", trials=20, seed=1))
    assert not cmp["violations"], cmp["violations"][:1]
    ni = json.loads(sdft.nitest(lib, lib_rules, "strcpy", trials=20, seed=1))
    assert not ni["violations"]

    prog, cfg = sdft.memcpy_bench(256)
    csv = sdft.bench(prog, sdft.generate_rules(prog, default_len=512), args=[256], taint_config=cfg, default_len=512)
    lines = csv.strip().splitlines()
    assert lines[1].startswith("main,instr,") and lines[2].startswith("main,hybrid,"), csv

    try:
        sdft.Module("fn @f() -> void {\nentry:\n  call @g()\n  ret\n}\n")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid module accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
