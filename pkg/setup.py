from setuptools import setup


def read_requirements():
    with open("requirements.txt") as f:
        return [line.strip() for line in f if line.strip()]


setup(
    name="battbee",
    version="0.1",
    description="Electro-thermal battery model with short-circuit and thermal-runaway detection",
    license="MIT",
    packages=["battbee", "battbee.detect", "battbee.spm"],
    python_requires=">=3.8",
    install_requires=read_requirements(),
    tests_require="pytest",
    entry_points={"console_scripts": ["battbee=battbee.main:main"]},
    zip_safe=True,
)
