import pytest

from accor.config import ConfigError, build_synth, parse_ini, resolve_synth, resolve_train
from accor.frames import Band


def synth(text, **kw):
    return resolve_synth(parse_ini(text), **kw)


class TestSynth:
    def test_defaults(self):
        res = resolve_synth(None)
        assert res["dataset"]["per_class"] == 200 and res["dataset"]["n_classes"] == 10
        assert res["dataset"]["noise_snr_db"] == 20.0 and res["classes"] == []
        templates, per_class, jitter, seed, chirp, band = build_synth(res)
        assert len(templates) == 10 and per_class == 200 and seed == 0
        assert chirp.bandwidth == 4e9 and band is Band.GHZ64
        assert jitter.position_sigma == 0.01

    def test_inline_comments_and_overrides(self):
        res = synth("[dataset]\nper_class = 5 ; five\nnoise_snr_db = none  # clean\n", seed=9, band=67)
        assert res["dataset"]["per_class"] == 5 and res["dataset"]["noise_snr_db"] is None
        assert res["dataset"]["seed"] == 9 and res["dataset"]["band"] == 67
        assert build_synth(res)[4].center_frequency == 67e9

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match=r"unknown key \[dataset\] bogus"):
            synth("[dataset]\nbogus = 1\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match=r"\[optics\]"):
            synth("[optics]\nlens = 1\n")

    def test_bad_value_named(self):
        with pytest.raises(ConfigError, match=r"\[jitter\] position_sigma"):
            synth("[jitter]\nposition_sigma = wide\n")

    def test_custom_classes(self):
        text = (
            "[dataset]\nbox_attenuation = 0.5\n"
            "[class.rod]\nlabel = 1\nscatterers = 0,0,0.5,1; 0.02,0,0.52,0.5\ninclude_box = false\n"
            "[class.dot]\nlabel = 0\nscatterers = 0,0,0.4,1\nnoise_snr_db = none\n"
        )
        res = synth(text)
        assert [c["name"] for c in res["classes"]] == ["dot", "rod"]
        assert res["classes"][0]["box_attenuation"] == 0.5
        assert res["classes"][0]["noise_snr_db"] is None and res["classes"][1]["noise_snr_db"] == 20.0
        templates = build_synth(res)[0]
        assert len(templates[1].scatterers) == 2
        assert len(templates[0].scatterers) > 1  # box scatterers added

    def test_class_missing_label(self):
        with pytest.raises(ConfigError, match=r"missing key \[class.rod\] label"):
            synth("[class.rod]\nscatterers = 0,0,0.5,1\n")

    def test_scatterer_needs_four_values(self):
        with pytest.raises(ConfigError, match="x,y,z,reflectivity"):
            synth("[class.rod]\nlabel = 0\nscatterers = 0,0,0.5\n")

    def test_invalid_physical_values(self):
        with pytest.raises(ConfigError):
            build_synth(synth("[jitter]\nposition_sigma = -1\n"))

    def test_malformed(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_ini("no section here\n")


class TestTrain:
    def test_defaults(self):
        res = resolve_train(None)
        assert res["model"]["conv_channels"] == [32, 64, 128]
        assert (res["loss"]["alpha"], res["loss"]["tau"]) == (0.4, 0.1)
        assert (res["train"]["epochs"], res["train"]["batch_size"]) == (60, 32)
        assert res["split"] == {"train_fraction": 0.8, "stratified": True}

    def test_file_and_overrides(self):
        p = parse_ini("[model]\nconv_channels = 4, 8, 16\n[loss]\nclass_weights = balanced\n[train]\nepochs = 3\n")
        res = resolve_train(p, {"loss": {"alpha": 0.0, "tau": None}, "train": {"epochs": 7}})
        assert res["model"]["conv_channels"] == [4, 8, 16]
        assert res["loss"]["alpha"] == 0.0 and res["loss"]["tau"] == 0.1
        assert res["loss"]["class_weights"] == "inverse_frequency"
        assert res["train"]["epochs"] == 7

    def test_explicit_weights(self):
        res = resolve_train(parse_ini("[loss]\nclass_weights = 1, 2.5\n"))
        assert res["loss"]["class_weights"] == [1.0, 2.5]

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r"\[train\] warmup"):
            resolve_train(parse_ini("[train]\nwarmup = 5\n"))

    def test_bool_parsing(self):
        assert resolve_train(parse_ini("[train]\nshuffle = off\n"))["train"]["shuffle"] is False
        with pytest.raises(ConfigError, match="shuffle"):
            resolve_train(parse_ini("[train]\nshuffle = maybe\n"))
