import pytest
from hypothesis import given, strategies as st

from fgprm.core import (
    DimensionMismatch,
    HallucinationType,
    InjectionMeta,
    InvalidMeta,
    ReasoningChain,
    ReasoningStep,
    StepLabelMatrix,
    collapse_labels,
    make_instance,
)

CE = HallucinationType.CALCULATION_ERROR
LI = HallucinationType.LOGICAL_INCONSISTENCY


def chain_of(n: int) -> ReasoningChain:
    return ReasoningChain.from_texts("q?", [f"step {i}" for i in range(1, n + 1)])


class TestTaxonomy:
    def test_six_types_with_stable_indices(self):
        assert len(HallucinationType) == 6
        assert [int(t) for t in HallucinationType] == list(range(6))
        assert HallucinationType.CONTEXT_INCONSISTENCY == 0
        assert HallucinationType.FABRICATION == 5

    def test_labels_and_slugs(self):
        assert CE.label == "Calculation Error"
        assert CE.slug == "calculation_error"


class TestChainModel:
    def test_step_text_must_be_nonempty(self):
        with pytest.raises(ValueError):
            ReasoningStep(text="   ", ordinal=1)

    def test_ordinals_must_be_contiguous(self):
        steps = (ReasoningStep("a", 1), ReasoningStep("b", 3))
        with pytest.raises(ValueError):
            ReasoningChain(question="q", steps=steps)

    def test_chain_needs_a_step(self):
        with pytest.raises(ValueError):
            ReasoningChain(question="q", steps=())


class TestMakeInstance:
    def test_golden_chain_with_all_false_matrix(self):
        chain = chain_of(3)
        inst = make_instance(chain, StepLabelMatrix.all_false(3), "golden")
        assert inst.provenance == "golden"
        assert inst.labels.is_all_false()
        assert inst.instance_id.startswith("inst-")

    def test_injected_instance_by_construction_rule(self):
        chain = chain_of(3)
        labels = StepLabelMatrix.single(CE, 3, 3)
        inst = make_instance(chain, labels, "injected", InjectionMeta(CE, 3))
        assert inst.labels.true_cells() == [(CE, 3)]

    def test_width_mismatch_is_rejected(self):
        chain = chain_of(3)
        with pytest.raises(DimensionMismatch):
            make_instance(chain, StepLabelMatrix.all_false(4), "golden")

    def test_five_row_matrix_is_rejected(self):
        with pytest.raises(DimensionMismatch):
            StepLabelMatrix(rows=tuple((False,) * 3 for _ in range(5)))

    def test_injected_without_meta_is_rejected(self):
        chain = chain_of(2)
        with pytest.raises(InvalidMeta):
            make_instance(chain, StepLabelMatrix.single(CE, 2, 2), "injected")

    def test_golden_with_true_labels_is_rejected(self):
        chain = chain_of(2)
        with pytest.raises(InvalidMeta):
            make_instance(chain, StepLabelMatrix.single(CE, 1, 2), "golden")

    def test_meta_position_beyond_length_is_rejected(self):
        chain = chain_of(2)
        with pytest.raises(InvalidMeta):
            make_instance(
                chain, StepLabelMatrix.single(CE, 2, 2), "injected", InjectionMeta(CE, 5)
            )

    def test_round_trip_reproduces_inputs(self):
        chain = chain_of(4)
        labels = StepLabelMatrix.single(LI, 4, 4)
        inst = make_instance(
            chain, labels, "injected", InjectionMeta(LI, 4), meta={"k": "v"}
        )
        assert inst.chain is chain
        assert inst.labels is labels
        assert inst.injection_meta == InjectionMeta(LI, 4)
        assert inst.meta == {"k": "v"}

    def test_minted_ids_are_content_deterministic(self):
        chain = chain_of(3)
        a = make_instance(chain, StepLabelMatrix.all_false(3), "golden")
        b = make_instance(chain, StepLabelMatrix.all_false(3), "golden")
        assert a.instance_id == b.instance_id


class TestCollapseLabels:
    def test_all_false_collapses_to_all_false(self):
        assert collapse_labels(StepLabelMatrix.all_false(3)) == [False] * 3

    def test_single_cell_collapses_to_single_column(self):
        m = StepLabelMatrix.single(LI, 2, 3)
        assert collapse_labels(m) == [False, True, False]

    def test_union_of_two_types_in_one_column(self):
        rows = [[False, False] for _ in range(6)]
        rows[int(LI)][1] = True
        rows[int(CE)][1] = True
        m = StepLabelMatrix.from_rows(rows)
        assert collapse_labels(m) == [False, True]

    @given(
        st.integers(min_value=1, max_value=8).flatmap(
            lambda width: st.tuples(
                st.lists(
                    st.lists(st.booleans(), min_size=width, max_size=width),
                    min_size=6,
                    max_size=6,
                ),
                st.integers(min_value=0, max_value=5),
                st.integers(min_value=0, max_value=width - 1),
            )
        )
    )
    def test_collapse_is_monotone_under_adding_a_true_cell(self, case):
        rows, t, i = case
        base = StepLabelMatrix.from_rows(rows)
        bumped_rows = [list(r) for r in rows]
        bumped_rows[t][i] = True
        bumped = StepLabelMatrix.from_rows(bumped_rows)
        before = collapse_labels(base)
        after = collapse_labels(bumped)
        assert all(not b or a for b, a in zip(before, after))

    def test_injected_instances_collapse_to_one_true_at_the_meta_position(self):
        chain = chain_of(5)
        inst = make_instance(
            chain, StepLabelMatrix.single(CE, 5, 5), "injected", InjectionMeta(CE, 5)
        )
        collapsed = collapse_labels(inst.labels)
        assert collapsed.count(True) == 1
        assert collapsed[inst.injection_meta.position - 1]
