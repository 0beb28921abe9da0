"""Acceptance suite: property oracles plus the scaled-down fidelity runs.

Every criterion is one test that prints ``ACCEPTANCE <name>: PASS`` when it
holds at its stated tolerance. The training-based criteria share one desk
stack (dataset -> codec -> encoders -> diffusion) built once and cached under
``.acceptance_cache/<config-hash>/`` next to this repo's sources; delete that
directory to force a from-scratch rebuild. A fresh build takes a few hours
on a 2-core CPU box (well inside each criterion's stated budget); cached
re-runs take minutes.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy import stats

from sg2vid.data_synth import (
    EntitySpec,
    SceneScript,
    SynthConfig,
    load_clip,
    load_index,
    make_dataset,
    palette_from_index,
    render_script,
    split_clips,
)
from sg2vid.diffusion.codec import CodecConfig, train_codec
from sg2vid.diffusion.schedule import NoiseSchedule, forward_diffuse, low_freq_init
from sg2vid.diffusion.training import DiffusionConfig, load_generation_checkpoint, train_diffusion
from sg2vid.diffusion.sampling import sample
from sg2vid.evaluation import (
    FeatureSet,
    RandomConvVideoFeatures,
    conditioning_fidelity,
    detect_clip,
    entry_frames_from_detections,
    entry_frames_from_sequence,
    frechet_distance,
    oracle_detect,
)
from sg2vid.graph_encoders import (
    EncoderSpec,
    GATv2Layer,
    GraphEncoder,
    encode_graph,
    graph_tensors,
    load_encoder_checkpoint,
    permute_graph,
)
from sg2vid.pretraining import (
    AuxiliaryNets,
    PretrainConfig,
    info_nce_from_scores,
    load_auxiliaries,
    pretrain,
    reconstruction_loss,
    retrieval_accuracy,
)
from sg2vid.sg_core import GraphSequence, SceneGraph, SceneNode, build_scene_graph, interpolate_attr

from helpers import (
    all_pairs_adjacency,
    flood_fill_components,
    pixel_loop_node_attrs,
    random_mask,
    random_sequence,
)

torch.set_num_threads(2)

CACHE_ROOT = Path(__file__).resolve().parent.parent / ".acceptance_cache"


@dataclass
class DeskConfig:
    synth: SynthConfig
    codec: CodecConfig
    pretrain: PretrainConfig
    diffusion: DiffusionConfig


DESK = DeskConfig(
    synth=SynthConfig(n_videos=40, frames_per_video=76, resolution=64, seed=0),
    codec=CodecConfig(channels=4, base=32, stages=2, steps=1500, batch_size=32,
                      lr=2e-3, seed=0),
    pretrain=PretrainConfig(steps=1200, batch_size=8, lr=2e-4, seed=0),
    diffusion=DiffusionConfig(mode="conditioned", timesteps=200, steps=6000,
                              batch_size=8, lr=2e-4, seed=0),
)


def _config_hash(config: DeskConfig) -> str:
    doc = {k: asdict(v) for k, v in vars(config).items()}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:12]


def _announce(name: str):
    print(f"ACCEPTANCE {name}: PASS")


@pytest.fixture(scope="session")
def desk_stack():
    """Dataset + trained codec/encoders/diffusion, cached by config hash."""
    cache = CACHE_ROOT / _config_hash(DESK)
    cache.mkdir(parents=True, exist_ok=True)
    dataset_dir = cache / "ds"
    codec_ckpt = cache / "codec" / "codec.pt"
    enc_ckpt = cache / "pretrain" / "encoders.pt"
    diff_ckpt = cache / "diffusion" / "diffusion.pt"

    if not (dataset_dir / "index.json").exists():
        print(f"\n[desk build] rendering dataset ({DESK.synth.n_videos} videos)...",
              flush=True)
        make_dataset(DESK.synth, dataset_dir)
    if not codec_ckpt.exists():
        print("[desk build] training codec...", flush=True)
        train_codec(dataset_dir, DESK.codec, cache / "codec")
    if not enc_ckpt.exists():
        print("[desk build] pretraining graph encoders...", flush=True)
        pretrain(dataset_dir, DESK.pretrain, cache / "pretrain")
    if not diff_ckpt.exists():
        print("[desk build] training diffusion model (the long stage)...", flush=True)
        train_diffusion(dataset_dir, enc_ckpt, codec_ckpt, DESK.diffusion,
                        cache / "diffusion")
    return {
        "dataset": dataset_dir,
        "codec": codec_ckpt,
        "encoders": enc_ckpt,
        "diffusion": diff_ckpt,
        "stack": load_generation_checkpoint(diff_ckpt),
        "index": load_index(dataset_dir),
    }


# ---------------------------------------------------------------------------
# Criterion: structure oracle
# ---------------------------------------------------------------------------


def test_structure_oracle_200_masks():
    start = time.time()
    rng = np.random.default_rng(20_24)
    for trial in range(200):
        h, w = 64, 64
        mask = random_mask(rng, h, w, class_count=5, blobs=int(rng.integers(1, 5)))
        flow = rng.normal(scale=2.0, size=(h, w, 2))
        depth = rng.uniform(size=(h, w))
        graph = build_scene_graph(mask, flow, depth, class_count=5, min_area=4)
        comps = flood_fill_components(mask, min_area=4)
        assert len(graph.nodes) == len(comps), f"trial {trial}: node count mismatch"
        assert {(a, b) for a, b in graph.edges} == all_pairs_adjacency(comps)
        for node, comp in zip(graph.nodes, comps):
            assert node.class_id == comp["label"]
            ref = pixel_loop_node_attrs(comp, flow, depth, h, w)
            for attr in ("centroid", "spread", "flow"):
                got = getattr(node, attr)
                assert abs(got[0] - ref[attr][0]) < 1e-9
                assert abs(got[1] - ref[attr][1]) < 1e-9
            assert abs(node.depth - ref["depth"]) < 1e-9
    elapsed = time.time() - start
    assert elapsed < 60.0, f"structure oracle took {elapsed:.1f}s (budget 60s)"
    _announce("structure-oracle (200 masks, exact adjacency, 1e-9 means)")


# ---------------------------------------------------------------------------
# Criterion: loss oracles
# ---------------------------------------------------------------------------


def test_loss_oracles():
    rng = np.random.default_rng(7)
    # Reconstruction objective vs scalar loop.
    pred = rng.normal(size=(2, 6))
    target = rng.normal(size=(2, 6))
    loop = sum(
        (pred[i, j] - target[i, j]) ** 2 for i in range(2) for j in range(6)
    ) / 12
    got = reconstruction_loss(torch.tensor(pred), torch.tensor(target)).item()
    assert abs(got - loop) < 1e-9

    # Contrastive objective vs softmax cross-entropy loop.
    scores = rng.normal(size=(5, 5))
    loop = 0.0
    for i in range(5):
        denom = sum(math.exp(s) for s in scores[i])
        loop += -math.log(math.exp(scores[i, i]) / denom)
    loop /= 5
    got = info_nce_from_scores(torch.tensor(scores)).item()
    assert abs(got - loop) < 1e-9

    for b in (2, 4, 8):
        uniform = info_nce_from_scores(torch.zeros((b, b), dtype=torch.float64))
        assert abs(uniform.item() - math.log(b)) < 1e-9
    _announce("loss-oracles (MSE loop 1e-9, InfoNCE loop 1e-9, ln(B) for B in {2,4,8})")


# ---------------------------------------------------------------------------
# Criterion: gradient checks
# ---------------------------------------------------------------------------


def _check_param_slices(loss_fn, params, rng, min_slices, h=1e-4, rel=1e-3,
                        per_param=2):
    loss = loss_fn()
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss.backward()
    active = [p for p in params if p.grad is not None and p.grad.abs().max() > 1e-12]
    checked = 0
    for p in active:
        flat = p.grad.view(-1)
        order = np.argsort(-np.abs(flat.detach().numpy()))
        for idx in order[:per_param]:
            idx = int(idx)
            with torch.no_grad():
                orig = p.view(-1)[idx].item()
                p.view(-1)[idx] = orig + h
                hi = loss_fn().item()
                p.view(-1)[idx] = orig - h
                lo = loss_fn().item()
                p.view(-1)[idx] = orig
            fd = (hi - lo) / (2 * h)
            an = flat[idx].item()
            assert abs(fd - an) <= rel * max(abs(fd), abs(an), 1e-6), (
                f"grad mismatch: fd={fd} analytic={an}"
            )
            checked += 1
    assert checked >= min_slices, f"only {checked} slices checked"
    return checked


def test_gradient_checks():
    start = time.time()
    rng = np.random.default_rng(11)

    # Graph attention layer.
    torch.manual_seed(11)
    layer = GATv2Layer(12, 8, heads=2).double()
    g = random_sequence(rng, n_frames=1, max_nodes=5).graphs[0]
    while len(g.nodes) < 3:
        g = random_sequence(rng, n_frames=1, max_nodes=5).graphs[0]
    x, edges = graph_tensors(g, 5, dtype=torch.float64)
    w_layer = torch.randn(len(g.nodes), 8, dtype=torch.float64)
    n_layer = _check_param_slices(
        lambda: (layer(x, edges) * w_layer).sum(), list(layer.parameters()), rng, 20,
        per_param=8)

    # Sequence decoder (reconstruction head) in float64.
    torch.manual_seed(12)
    nets = AuxiliaryNets(5, latent_dim=8, glob_embed_dim=6, loc_embed_dim=6,
                         contrast_dim=6, decoder_width=16, n_frames=4,
                         conv_base=4).double()
    masked = torch.randn(1, 4, 8, dtype=torch.float64)
    gemb = torch.randn(1, 4, 6, dtype=torch.float64)
    target = torch.randn(1, 4, 8, dtype=torch.float64)
    n_dec = _check_param_slices(
        lambda: reconstruction_loss(nets.decoder(masked, gemb), target),
        list(nets.decoder.parameters()), rng, 20)

    # Micro denoiser: 2 frames, 4x4 latents.
    from sg2vid.diffusion.denoiser import DenoiserConfig, VideoDenoiser

    torch.manual_seed(13)
    micro = VideoDenoiser(DenoiserConfig(
        latent_channels=2, resolution=4, n_frames=2, base_width=8,
        width_mult=(1, 2), emb_dim=16, heads=2, cond_dim=6, attn_levels=(1,),
    )).double()
    with torch.no_grad():
        for p in micro.parameters():
            p.add_(torch.randn_like(p) * 0.05)  # past the zero-init blocks
    z = torch.randn(1, 2, 2, 4, 4, dtype=torch.float64)
    t = torch.tensor([3])
    cond = torch.randn(1, 2, 6, dtype=torch.float64)
    w_model = torch.randn(1, 2, 2, 4, 4, dtype=torch.float64)
    n_micro = _check_param_slices(
        lambda: (micro(z, t, cond) * w_model).sum(), list(micro.parameters()),
        rng, 20)

    elapsed = time.time() - start
    assert elapsed < 300.0, f"gradient checks took {elapsed:.1f}s (budget 300s)"
    _announce(
        f"gradient-checks (layer {n_layer}, decoder {n_dec}, micro denoiser "
        f"{n_micro} slices, 1e-3 relative)"
    )


# ---------------------------------------------------------------------------
# Criterion: diffusion algebra
# ---------------------------------------------------------------------------


def test_diffusion_algebra():
    schedule = NoiseSchedule.linear(200)
    product = 1.0
    for t in range(1, 201):
        product *= 1.0 - schedule.betas[t - 1]
        assert abs(schedule.alpha_bars[t] - product) < 1e-12

    z0 = torch.randn(2, 3, 4, 8, 8)
    noise = torch.randn_like(z0)
    assert torch.equal(forward_diffuse(z0, 0, noise, schedule), z0)

    gen = torch.Generator().manual_seed(0)
    nz = torch.empty(4, 16, 16).normal_(generator=gen)
    fr = torch.empty(4, 16, 16).normal_(generator=gen)
    assert torch.equal(low_freq_init(nz, fr, 0.0), nz)
    assert torch.allclose(low_freq_init(nz, fr, 1.0), fr, atol=1e-6)
    once = low_freq_init(nz, fr, 0.35)
    twice = low_freq_init(once, fr, 0.35)
    assert torch.allclose(twice, once, atol=1e-6)
    _announce("diffusion-algebra (alpha-bar 1e-12, t=0 identity, "
              "rho boundaries + idempotence 1e-6)")


# ---------------------------------------------------------------------------
# Criterion: permutation invariance
# ---------------------------------------------------------------------------


def test_permutation_invariance_50_graphs():
    torch.manual_seed(21)
    rng = np.random.default_rng(21)
    enc = GraphEncoder(EncoderSpec(class_count=5, hidden=32, heads=4, layers=3,
                                   embed_dim=32))
    checked = 0
    while checked < 50:
        g = random_sequence(rng, n_frames=1, max_nodes=6).graphs[0]
        if len(g.nodes) < 2:
            continue
        perm = rng.permutation(len(g.nodes))
        a = encode_graph(g, 5, enc)
        b = encode_graph(permute_graph(g, perm), 5, enc)
        assert torch.allclose(a, b, atol=1e-5)
        checked += 1
    _announce("permutation-invariance (50 graphs, 1e-5)")


# ---------------------------------------------------------------------------
# Criteria requiring the trained desk stack
# ---------------------------------------------------------------------------


def test_pretraining_overfit_and_retrieval(desk_stack):
    log_path = Path(desk_stack["encoders"]).parent / "pretrain_log.ndjson"
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    first = np.mean([r["loss_loc"] for r in records[:4]])
    last = np.mean([r["loss_loc"] for r in records[-4:]])
    assert last <= 0.1 * first, (
        f"local loss fell only {100 * (1 - last / first):.1f}% "
        f"(needs >= 90%): {first:.4f} -> {last:.4f}"
    )

    enc_glob, _, _, aux = load_encoder_checkpoint(desk_stack["encoders"])
    nets = load_auxiliaries(aux)
    acc = retrieval_accuracy(desk_stack["dataset"], "val", enc_glob, nets,
                             batch_size=16)
    assert acc > 0.90, f"graph->mask retrieval accuracy {acc:.3f} (needs > 0.90)"
    _announce(f"pretraining-retrieval (loss -{100 * (1 - last / first):.0f}%, "
              f"retrieval {acc:.1%} > 90%)")


def _entry_cases(index, dataset_dir):
    cases = []
    for entry in split_clips(index, "test"):
        _, seq = load_clip(dataset_dir / entry["dir"])
        entries = entry_frames_from_sequence(seq)
        mid = {c: f for c, f in entries.items() if 2 <= f <= len(seq) - 3}
        if mid:
            cases.append((entry, mid))
    return cases


def test_conditioning_fidelity(desk_stack):
    stack = desk_stack["stack"]
    index = desk_stack["index"]
    dataset_dir = desk_stack["dataset"]
    palette = palette_from_index(index)
    entries = split_clips(index, "test")[:16]
    results = []
    for i, entry in enumerate(entries):
        clip, seq = load_clip(dataset_dir / entry["dir"])
        frames, _ = sample(stack, seq, first_frame=clip.frames[0], seed=1000 + i)
        results.append(conditioning_fidelity(frames, seq, palette))
    f1 = float(np.mean([r["f1_micro"] for r in results]))
    mae = float(np.mean([r["centroid_mae"] for r in results]))
    assert f1 >= 0.85, f"oracle-detector F1 {f1:.3f} (needs >= 0.85)"
    assert mae <= 3.0, f"centroid MAE {mae:.2f}px (needs <= 3px)"

    # Tool entry: node appearing mid-clip must be detected within +-1 frame.
    cases = _entry_cases(index, dataset_dir)
    assert len(cases) >= 5, f"only {len(cases)} held-out entry cases"
    hits, total = 0, 0
    for j, (entry, mid) in enumerate(cases[:12]):
        clip, seq = load_clip(dataset_dir / entry["dir"])
        frames, _ = sample(stack, seq, first_frame=clip.frames[0], seed=7000 + j)
        detected = entry_frames_from_detections(detect_clip(frames, palette))
        for class_id, scripted_frame in mid.items():
            total += 1
            if class_id in detected and abs(detected[class_id] - scripted_frame) <= 1:
                hits += 1
    rate = hits / total
    assert rate >= 0.80, f"entry frames within +-1 in {rate:.1%} (needs >= 80%)"
    _announce(
        f"conditioning-fidelity (F1 {f1:.3f} >= 0.85, MAE {mae:.2f}px <= 3px, "
        f"entry {rate:.0%} >= 80%)"
    )


def _miosis_sequence(index) -> tuple[GraphSequence, np.ndarray]:
    """Static centered disc whose spread ramps 0.5 -> 0.2, plus the matching
    rendered first frame."""
    class_names = tuple(index["class_names"])
    palette = palette_from_index(index)
    resolution = index["resolution"]
    n = index["clip_len"]
    node = SceneNode(0, 1, (0.5, 0.5), (0.5, 0.5), (0.0, 0.0), 0.5)
    graphs = []
    for f in range(n):
        spread = 0.5 if f < n - 1 else 0.2
        graphs.append(SceneGraph(f, (SceneNode(0, 1, (0.5, 0.5), (spread, spread),
                                               (0.0, 0.0), 0.5),), frozenset()))
    seq = GraphSequence(tuple(graphs), (resolution, resolution), class_names)
    seq = interpolate_attr(seq, 0, "spread", 0, n - 1)
    script = SceneScript(
        entities=(EntitySpec(1, "disc", (0.5, 0.5), (0.5, 0.5), ((0.5, 0.5),), 0.5),),
        palette=palette,
    )
    first = render_script(script, 1, resolution, resolution, rng_seed=99).frames[0]
    return seq, first


def test_miosis_analog(desk_stack):
    stack = desk_stack["stack"]
    index = desk_stack["index"]
    palette = palette_from_index(index)
    seq, first = _miosis_sequence(index)
    correlations = []
    for seed in range(8):
        frames, _ = sample(stack, seq, first_frame=first, seed=4000 + seed)
        detections = detect_clip(frames, palette)
        areas = []
        for dets in detections:
            pupil = [d for d in dets if d.class_id == 1]
            areas.append(max((d.area for d in pupil), default=0))
        rho = stats.spearmanr(np.arange(len(areas)), areas).statistic
        correlations.append(rho)
    mean_rho = float(np.mean(correlations))
    assert mean_rho <= -0.8, (
        f"mean Spearman(frame, detected area) = {mean_rho:.3f} (needs <= -0.8); "
        f"per-seed: {[f'{r:.2f}' for r in correlations]}"
    )
    _announce(f"miosis-analog (mean Spearman {mean_rho:.3f} <= -0.8 over 8 seeds)")


def test_first_frame_consistency(desk_stack):
    stack = desk_stack["stack"]
    index = desk_stack["index"]
    dataset_dir = desk_stack["dataset"]
    entry = split_clips(index, "test")[0]
    clip, seq = load_clip(dataset_dir / entry["dir"])
    frames, _ = sample(stack, seq, first_frame=clip.frames[0], seed=2)
    x = torch.as_tensor(clip.frames[0]).permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        roundtrip = stack.codec.decode(stack.codec.encode(x))[0].permute(1, 2, 0).numpy()
    gen_error = float(np.abs(frames[0] - roundtrip).mean())
    assert gen_error <= 1e-3, (
        f"frame 1 deviates from the codec round-trip by {gen_error:.2e} (> 1e-3)"
    )

    # Identity-codec case: the equality is exact up to float32 rescaling.
    from helpers import save_tiny_checkpoint
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        ckpt = Path(tmp) / "id.pt"
        save_tiny_checkpoint(ckpt, ("bg", "a"), resolution=16, n=4)
        tiny = load_generation_checkpoint(ckpt)
        rng = np.random.default_rng(3)
        node = SceneNode(0, 1, (0.5, 0.5), (0.3, 0.3), (0.0, 0.0), 0.5)
        graphs = tuple(SceneGraph(f, (node,), frozenset()) for f in range(4))
        tiny_seq = GraphSequence(graphs, (16, 16), ("bg", "a"))
        frame = rng.random((16, 16, 3)).astype(np.float32)
        out, _ = sample(tiny, tiny_seq, first_frame=frame, seed=0)
        id_error = float(np.abs(out[0] - frame).max())
        assert id_error < 1e-5
    _announce(
        f"first-frame-consistency (trained codec {gen_error:.1e} <= 1e-3, "
        f"identity codec {id_error:.1e})"
    )


def test_evaluation_metrics(desk_stack):
    # Closed-form sanity (zero, symmetry) restated at acceptance level.
    rng = np.random.default_rng(31)
    feats = FeatureSet(rng.normal(size=(64, 8)))
    assert frechet_distance(feats, feats) < 1e-6
    other = FeatureSet(rng.normal(size=(48, 8)) + 1.0)
    assert abs(frechet_distance(feats, other) - frechet_distance(other, feats)) < 1e-8
    mu = np.array([1.0, -2.0])
    a = FeatureSet(rng.normal(size=(10_000, 2)))
    b = FeatureSet(rng.normal(size=(10_000, 2)) + mu)
    assert frechet_distance(a, b) == pytest.approx(float(mu @ mu), abs=0.2)

    # Split-half real-vs-real must be well below generated-vs-real.
    stack = desk_stack["stack"]
    index = desk_stack["index"]
    dataset_dir = desk_stack["dataset"]
    extractor = RandomConvVideoFeatures(dim=16)
    entries = split_clips(index, "test")
    real = []
    for entry in entries:
        clip, _ = load_clip(dataset_dir / entry["dir"])
        real.append(clip.frames)
    generated = []
    for i, entry in enumerate(entries[:16]):
        clip, seq = load_clip(dataset_dir / entry["dir"])
        frames, _ = sample(stack, seq, first_frame=clip.frames[0], seed=5000 + i)
        generated.append(frames)
    half = len(real) // 2
    rvr = frechet_distance(FeatureSet(extractor(real[:half])),
                           FeatureSet(extractor(real[half : 2 * half])))
    gvr = frechet_distance(FeatureSet(extractor(generated)),
                           FeatureSet(extractor(real)))
    assert rvr < 0.10 * gvr, (
        f"real-vs-real {rvr:.4f} not under 10% of generated-vs-real {gvr:.4f}"
    )
    _announce(f"evaluation-metrics (closed forms ok; split-half {rvr:.3f} < "
              f"10% of generated-vs-real {gvr:.3f})")
