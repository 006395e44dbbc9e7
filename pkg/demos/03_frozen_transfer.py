"""
Frozen-model transfer between two cohorts
=========================================

A model trained on cohort A is applied unchanged to cohort B and compared
with B's own leave-one-subject-out score.  Electrode detachment is then
injected on B's wrist device.  Detached samples fall outside the
physiological range and are dropped, so with six subjects the change in
the frozen score stays within the spread across subjects.
"""
from stresswear.evaluation import loso, pretrained_eval
from stresswear.features import FeatureMatrix, Scenario
from stresswear.ingest import DeviceKind
from stresswear.models import ModelKind, fit_model
from stresswear.pipeline import cohort_matrices
from stresswear.synth import EDA_DETACHMENT, CohortSpec, gen_cohort, noisy_cohort

device = DeviceKind.EMPATICA_E4
s1 = Scenario.ALL_STRESSORS


def matrices(bundles):
    return cohort_matrices(bundles, device, [s1], include_eda=True)[s1]


# %%
# Two independent six-subject cohorts; HR/RR plus EDA features (takes a minute).
a_bundles = gen_cohort(CohortSpec(n_subjects=6, seed=0, devices=(device,)))
b_bundles = gen_cohort(CohortSpec(n_subjects=6, seed=1, devices=(device,)))
a, b = matrices(a_bundles), matrices(b_bundles)
print(f"cohort A {sum(len(m.labels) for m in a.values())} windows, cohort B {sum(len(m.labels) for m in b.values())}")

# %%
# Train once on all of A, then score every subject of B without refitting.
model = fit_model(FeatureMatrix.concatenate(a.values()), ModelKind.RANDOM_FOREST, meta={"cohort": "A"})
frozen = pretrained_eval(model, b)
own = loso(b, ModelKind.RANDOM_FOREST)
print(f"frozen A->B  {frozen.median:.3f} [{frozen.q1:.3f}, {frozen.q3:.3f}]")
print(f"LOSO on B    {own.median:.3f} [{own.q1:.3f}, {own.q3:.3f}]")

# %%
# Detachment: a quarter of the minutes lose electrode contact for 45 s.
b_noisy = matrices(noisy_cohort(b_bundles, EDA_DETACHMENT, [device], seed=5))
noisy = pretrained_eval(model, b_noisy)
print(f"frozen A->B with detachment {noisy.median:.3f} [{noisy.q1:.3f}, {noisy.q3:.3f}]")
