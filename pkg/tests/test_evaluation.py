import numpy as np
import pytest

from chartag.data import Vocab
from chartag.evaluation import EvalReport, error_rate, format_percent, report_table


@pytest.fixture
def tags():
    return Vocab(["A", "B", "C"])


class TestErrorRate:
    def test_two_wrong_of_ten(self, tags):
        pred = [[0] * 10]
        gold = [["A"] * 8 + ["B", "C"]]
        report = error_rate(pred, gold, tags, "pos")
        assert report.error_rate == 20.0

    def test_all_correct(self, tags):
        report = error_rate([[0, 1, 2]], [["A", "B", "C"]], tags, "pos")
        assert report.error_rate == 0.0

    def test_unseen_gold_tag_is_error_even_on_string_match(self):
        # the inventory lacks "D"; a prediction can never be scored right
        vocab = Vocab(["A"])
        report = error_rate([[0]], [["D"]], vocab, "pos")
        assert report.error_count == 1

    def test_length_mismatch(self, tags):
        with pytest.raises(ValueError):
            error_rate([[0, 1]], [["A"]], tags, "pos")
        with pytest.raises(ValueError):
            error_rate([[0]], [["A"], ["B"]], tags, "pos")

    def test_permutation_equivariance(self, tags):
        rng = np.random.default_rng(0)
        pred = [list(rng.integers(0, 3, size=20))]
        gold = [[tags.symbol(i) for i in rng.integers(0, 3, size=20)]]
        base = error_rate(pred, gold, tags, "pos").error_rate
        order = rng.permutation(20)
        shuffled = error_rate([[pred[0][i] for i in order]],
                              [[gold[0][i] for i in order]], tags, "pos")
        assert shuffled.error_rate == base

    def test_gold_vs_itself_is_zero(self, tags):
        gold = [["A", "C", "B"], ["B"]]
        pred = [[tags.id(t) for t in sent] for sent in gold]
        assert error_rate(pred, gold, tags, "pos").error_rate == 0.0

    def test_confusion_counts(self, tags):
        report = error_rate([[0, 1]], [["B", "B"]], tags, "pos", confusion=True)
        assert report.confusion == {("B", "A"): 1}


class TestReportTable:
    def test_single_row(self):
        text, csv = report_table([EvalReport("pos", 10, 2)])
        assert "pos" in text
        assert csv.splitlines()[0] == "tagset,tokens,errors,error_rate"
        assert csv.splitlines()[1] == "pos,10,2,20.00"

    def test_round_half_up(self):
        assert format_percent(8.715) == "8.72"
        assert format_percent(8.714) == "8.71"
        assert format_percent(0.005) == "0.01"

    def test_csv_and_text_share_numbers(self):
        reports = [EvalReport("posmorph", 1000, 87), EvalReport("pos", 1000, 24)]
        text, csv = report_table(reports)
        for line in csv.splitlines()[1:]:
            rate = line.split(",")[-1]
            assert rate + "%" in text.replace(" ", "")

    def test_column_order(self):
        reports = [EvalReport("posmorph", 10, 1), EvalReport("pos", 10, 1),
                   EvalReport("morph", 10, 1)]
        _, csv = report_table(reports)
        names = [line.split(",")[0] for line in csv.splitlines()[1:]]
        assert names == ["pos", "morph", "posmorph"]
