from setuptools import setup, find_packages

with open("README.md") as f:
    readme = f.read()

tests_require = ["pytest"]

setup(
    name="overflowlab",
    description="Multilevel splitting estimators for overflow probabilities in Jackson networks",
    long_description=readme,
    long_description_content_type="text/markdown",
    entry_points={
        "pytest11": ["overflowlab = overflowlab.pytest"],
        "console_scripts": ["overflowlab = overflowlab.cli:main"],
    },
    install_requires=["numpy", "scipy"],
    setup_requires=["pytest-runner"],
    tests_require=tests_require,
    extras_require={"test": tests_require, "pytest": ["pytest"]},
    license="MIT",
    classifiers=[
        "Framework :: Pytest",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    packages=find_packages(exclude=("overflowlab_tests", "example", "example.*")),
)
