import hypothesis

# Tower levels are realized lazily and the first example pays for it.
hypothesis.settings.register_profile("prochern", deadline=None)
hypothesis.settings.load_profile("prochern")
