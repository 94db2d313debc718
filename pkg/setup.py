from setuptools import setup, find_packages

setup(
    name="nonlocal-boxes",
    version="0.1.0",
    description="Simulation and exact analysis of nonlocal box protocols and their amplification",
    packages=find_packages(include=["nonlocal_boxes", "nonlocal_boxes.*"]),
    python_requires=">=3.9",
    entry_points={
        "console_scripts": [
            "nonlocal-boxes=nonlocal_boxes.cli:main",
        ]
    },
    install_requires=["numpy", "scipy", "donfig", "jinja2", "pyyaml"],
    extras_require={"tests": ["pytest", "pytest-cov", "coverage", "hypothesis"]},
)
