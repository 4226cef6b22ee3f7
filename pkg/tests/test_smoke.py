def test_smoke_import():
    import minimax_lab  # noqa: F401
    from minimax_lab.main import STUDIES, main

    assert callable(main)
    assert "gap" in STUDIES
