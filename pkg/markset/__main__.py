from markset.cli import main

main()
