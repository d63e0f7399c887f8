import setuptools

with open('requirements.txt') as f:
    required = f.read().splitlines()

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name='ccd-anticipation',
    version='0.1.0',
    description='Cross-modal contrastive distillation for next-step anticipation of procedures',
    long_description=long_description,
    long_description_content_type="text/markdown",
    license='MIT',
    packages=['ccd_anticipation'],
    python_requires='>=3.9',
    install_requires=required,
    entry_points={
        'console_scripts': ['ccd=ccd_anticipation.cli:main'],
    },
)
