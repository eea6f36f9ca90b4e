import hypothesis

hypothesis.settings.register_profile(
    "arcfit",
    deadline=None,
    derandomize=True,
    max_examples=50,
)
hypothesis.settings.load_profile("arcfit")
