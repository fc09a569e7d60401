import setuptools

setuptools.setup(
    name="gsim",
    version="0.2.0",
    author="gsim developers",
    description="Rate-equation simulation of gain-switched laser diodes, KS pulse indistinguishability tests and decoy-state key rates.",
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    install_requires=["numpy", "scipy", "pandas"],
    extras_require={"test": ["pytest"]},
    packages=setuptools.find_packages(exclude=["testing"]),
    package_data={"gsim": ["data/*.params"]},
    python_requires=">=3.8",
    classifiers=[
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8'
    ],
    entry_points={
        'console_scripts': [ #main() functions use argparse, so arguments pass straight through
            'gsim = gsim.GainSwitch:main',
            'gsimSettings = gsim.settings:main',
            'gsimParams = gsim.params:main'
        ],
    },
)
