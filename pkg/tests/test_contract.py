"""The backend contract suite, exercised against the offline mock."""

from simcurate import contract, genai


def test_mock_backend_satisfies_generation_contract():
    contract.check_generation_contract(genai.MockBackend(), check_pixels=True)


def test_mock_backend_honors_steps():
    contract.check_steps_honored(genai.MockBackend())


def test_mock_backend_caption_contract():
    contract.check_caption_contract(genai.MockBackend())


def test_full_contract_run():
    contract.run_backend_contract(genai.MockBackend(), check_pixels=True)
