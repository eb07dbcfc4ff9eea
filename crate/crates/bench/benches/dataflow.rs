use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use provex_core::dataflow::{analyze, parse_script, AnalysisConfig, ScriptKind};
use provex_core::fixtures::synth::synth_script;

fn parse_and_trace(c: &mut Criterion) {
    let config = AnalysisConfig::default();
    let mut group = c.benchmark_group("parse_and_trace");
    for statements in [20usize, 80, 320] {
        let scripts: Vec<String> = (0..50).map(|s| synth_script(s, statements, false).source).collect();
        let lines: usize = scripts.iter().map(|s| s.lines().count()).sum();
        group.throughput(Throughput::Elements(lines as u64));
        group.bench_with_input(BenchmarkId::from_parameter(statements), &scripts, |b, scripts| {
            b.iter(|| {
                for s in scripts {
                    let p = parse_script(black_box(s.as_bytes()), ScriptKind::Script);
                    black_box(analyze(&p, &config));
                }
            })
        });
    }
    group.finish();
}

fn parse_only(c: &mut Criterion) {
    let script = synth_script(1, 80, false).source;
    c.bench_function("parse_only_100_lines", |b| {
        b.iter(|| parse_script(black_box(script.as_bytes()), ScriptKind::Script))
    });
}

criterion_group!(benches, parse_and_trace, parse_only);
criterion_main!(benches);
